"""Exact solvers and model-free policy learning for discrete-time Markov
jump linear quadratic control."""

from .benchmarks import (
    BUILTIN_MODELS,
    builtin_model,
    first_state_feedback_mask,
    two_mode_output_feedback,
    two_mode_switching,
)
from .errors import (
    AllDiverged,
    BadDiscount,
    DegenerateInit,
    DimensionMismatch,
    GenerationFailed,
    MjlsError,
    NoConvergence,
    NotPositiveDefinite,
    NotStabilizing,
    NotStochastic,
    SingularChi,
    SingularMatrix,
    ZeroSigma,
)
from .estimator import GradientEstimate, estimate, regularize_chi, score_gain, score_sigma
from .exact import (
    CoupledValue,
    ModeCovariances,
    compute_chi,
    covariance_sequence,
    evaluate_cost,
    optimal_gains,
    solve_coupled_are,
    solve_coupled_lyapunov,
    solve_z,
)
from .generate import GenSpec, gen_model, gen_stable_mode, gen_transition
from .gradient import (
    ConvergenceCertificate,
    ExactGradient,
    NpgTrace,
    certify_convergence,
    exact_gradient,
    fisher_matrix,
    npg_step_exact,
    run_model_based_npg,
)
from .learner import (
    LearnerConfig,
    LearningTrace,
    npg_update,
    project_gradient,
    run_learning,
    run_repetitions,
    summarize_ensemble,
)
from .model import (
    GainPolicy,
    MjlsModel,
    StabilityReport,
    StructureMask,
    closed_loop_operator,
    is_ms_stabilizing,
    list_violations,
    load_model,
    mode_marginals,
    model_from_dict,
    save_model,
    validate_model,
)
from .simulate import (
    BlackBoxSystem,
    Trajectory,
    discounted_return,
    rollout,
    sample_mode_chain,
    substream,
    write_trajectory_csv,
)

__version__ = "0.1.0"
