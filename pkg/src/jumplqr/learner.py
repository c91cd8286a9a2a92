"""Model-free natural policy gradient learning loop, exploration decay
scheduling, and structured controller learning by projected gradient descent."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AllDiverged, DimensionMismatch, NotStabilizing, SingularChi, ZeroSigma
from .estimator import estimate, regularize_chi
from .exact import evaluate_cost, optimal_gains, solve_coupled_are
from .model import GainPolicy, StructureMask
from .simulate import BlackBoxSystem


@dataclass(frozen=True)
class LearnerConfig:
    """Settings of one learning run.

    mode "npg" preconditions the gradient estimate with the inverse of the
    estimated covariance aggregate; mode "structured_gd" applies plain
    gradient descent on mask-projected gradients with step eta * sigma^2.
    sigma follows the multiplicative decay schedule by default
    (sigma_update="decay"); sigma_update="gradient" applies the estimated
    sigma gradient scaled by alpha instead.
    """

    steps: int
    eta: float
    sigma0: float
    N: int
    T_F: int
    seed: int | tuple = 0
    sigma_decay: float = 0.99
    mode: str = "npg"
    mask: StructureMask | None = None
    chi_floor: float | None = None
    sigma_update: str = "decay"
    alpha: float = 0.0
    baseline: str = "cumulative"
    initial_gains: np.ndarray | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not 0 < self.sigma_decay <= 1:
            raise ValueError(f"sigma_decay must lie in (0, 1], got {self.sigma_decay}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if self.T_F < 1:
            raise ValueError(f"T_F must be >= 1, got {self.T_F}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.mode not in ("npg", "structured_gd"):
            raise ValueError(f"mode must be 'npg' or 'structured_gd', got {self.mode!r}")
        if self.sigma_update not in ("decay", "gradient"):
            raise ValueError(f"sigma_update must be 'decay' or 'gradient', got {self.sigma_update!r}")
        if self.mode == "structured_gd" and self.mask is None:
            raise ValueError("structured_gd mode requires a mask")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    gains: np.ndarray
    sigma: float
    cost: float
    relative_error_pct: float
    grad_norm: float
    diverged_count: int
    feasible: bool
    wall_time: float


@dataclass
class LearningTrace:
    """Per-iteration learning records plus the reference optimum when scored."""

    records: list = field(default_factory=list)
    c_star: float = float("nan")

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]

    def relative_errors(self):
        return np.array([r.relative_error_pct for r in self.records])

    def costs(self):
        return np.array([r.cost for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "sigma", "cost", "relative_error_pct",
                             "grad_norm", "diverged"])
            for r in self.records:
                writer.writerow([r.iteration, repr(r.sigma), repr(r.cost),
                                 repr(r.relative_error_pct), repr(r.grad_norm),
                                 r.diverged_count])

    def write_json(self, path):
        payload = {
            "c_star": self.c_star,
            "records": [
                {
                    "iteration": r.iteration,
                    "gains": r.gains.tolist(),
                    "sigma": r.sigma,
                    "cost": r.cost,
                    "relative_error_pct": r.relative_error_pct,
                    "grad_norm": r.grad_norm,
                    "diverged": r.diverged_count,
                    "feasible": r.feasible,
                    "wall_time": r.wall_time,
                }
                for r in self.records
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def npg_update(policy, est, eta, alpha, gamma, k, chi=None, sigma_decay=None):
    """One model-free natural-gradient update of the gains and sigma.

    K <- K - eta sigma^2 grad_hat chi^{-1}; sigma follows the decay schedule
    when sigma_decay is given, otherwise the scaled sigma-gradient step
    (clamped at zero).  chi defaults to the raw estimate; pass a regularized
    matrix to guarantee invertibility.
    """
    if policy.sigma == 0:
        raise ZeroSigma("the natural-gradient update requires sigma > 0")
    chi = est.chi_hat if chi is None else chi
    try:
        direction = np.linalg.solve(chi, est.grad_K_hat.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularChi("estimated covariance aggregate is singular; "
                          "regularize it before updating") from exc
    stacked = policy.stacked - eta * policy.sigma**2 * direction
    gains = GainPolicy.from_stacked(stacked, policy.n_modes).gains
    if sigma_decay is not None:
        sigma = sigma_decay * policy.sigma
    else:
        sigma = max(policy.sigma - alpha * policy.sigma**2 * est.grad_sigma_hat
                    * (1.0 - gamma) / (2.0 * k), 0.0)
    return GainPolicy(gains, sigma)


def project_gradient(grad_K, mask):
    """Zero the gradient entries that the structure mask forbids."""
    grad_K = np.asarray(grad_K, dtype=float)
    stacked = mask.stacked
    if grad_K.shape != stacked.shape:
        raise DimensionMismatch(
            f"gradient has shape {grad_K.shape}, mask implies {stacked.shape}"
        )
    return grad_K * stacked


def _record(trace, scorer, iteration, policy, grad_norm, diverged, wall):
    cost = float("nan")
    rel = float("nan")
    feasible = True
    if scorer is not None:
        try:
            cost = evaluate_cost(scorer, GainPolicy(policy.gains, 0.0))
            if np.isfinite(trace.c_star) and trace.c_star != 0:
                rel = abs(cost - trace.c_star) / trace.c_star * 100.0
        except NotStabilizing:
            feasible = False
    trace.records.append(IterationRecord(
        iteration=iteration, gains=policy.gains.copy(), sigma=policy.sigma,
        cost=cost, relative_error_pct=rel, grad_norm=grad_norm,
        diverged_count=diverged, feasible=feasible, wall_time=wall,
    ))


def run_learning(system, config, scorer=None, estimate_fn=estimate):
    """Iterate estimate -> update against a black-box system.

    Starts from zero gains unless config.initial_gains overrides.  When a
    scorer model is given, every iterate is evaluated exactly at sigma = 0
    and the relative error |C - C*|/C* * 100 is recorded; iterates outside
    the feasible set are tagged infeasible but learning continues.  Raises
    AllDiverged (carrying the partial trace) when a whole batch diverges.
    """
    n, k, d = system.n_modes, system.input_dim, system.state_dim
    gains = (np.zeros((n, k, d)) if config.initial_gains is None
             else np.array(config.initial_gains, dtype=float))
    if config.mode == "structured_gd":
        gains = gains * config.mask.mask
    policy = GainPolicy(gains, config.sigma0)

    trace = LearningTrace()
    if scorer is not None:
        trace.c_star = evaluate_cost(scorer, optimal_gains(scorer, solve_coupled_are(scorer)))
    _record(trace, scorer, 0, policy, float("nan"), 0, 0.0)

    for it in range(1, config.steps + 1):
        t0 = time.perf_counter()
        try:
            est = estimate_fn(system, policy, config.N, config.T_F, system.gamma,
                              stream=_stream_key(config.seed, it),
                              baseline=config.baseline)
        except AllDiverged as exc:
            exc.trace = trace
            raise
        decay = config.sigma_decay if config.sigma_update == "decay" else None
        if config.mode == "npg":
            chi = regularize_chi(est.chi_hat, config.chi_floor).matrix
            policy = npg_update(policy, est, config.eta, config.alpha, system.gamma,
                                k, chi=chi, sigma_decay=decay)
            grad_norm = float(np.linalg.norm(est.grad_K_hat))
        else:
            projected = project_gradient(est.grad_K_hat, config.mask)
            stacked = policy.stacked - config.eta * policy.sigma**2 * projected
            new_gains = GainPolicy.from_stacked(stacked, n).gains
            if decay is not None:
                sigma = decay * policy.sigma
            else:
                sigma = max(policy.sigma - config.alpha * policy.sigma**2
                            * est.grad_sigma_hat * (1.0 - system.gamma) / (2.0 * k), 0.0)
            policy = GainPolicy(new_gains, sigma)
            grad_norm = float(np.linalg.norm(projected))
        _record(trace, scorer, it, policy, grad_norm, est.diverged_count,
                time.perf_counter() - t0)
    return trace


def _stream_key(seed, iteration):
    return (seed if isinstance(seed, tuple) else (seed,)) + (iteration,)


def _run_repetition(args):
    model, config, rep, score = args
    base = config.seed if isinstance(config.seed, tuple) else (config.seed,)
    rep_config = replace(config, seed=base + (rep,))
    system = BlackBoxSystem(model, master_seed=rep_config.seed)
    return run_learning(system, rep_config, scorer=model if score else None)


def _limit_worker_threads():
    # one compiled-kernel thread per worker avoids oversubscription; the
    # kernels write disjoint outputs, so results do not depend on this
    import numba

    numba.set_num_threads(1)


def run_repetitions(model, config, reps, workers=1, score=True):
    """Independent seeded learning runs; repetition r uses seed key (seed, r).

    Results are collected in repetition order, identical to serial execution.
    """
    jobs = [(model, config, r, score) for r in range(reps)]
    if workers is None or workers <= 1 or reps <= 1:
        return [_run_repetition(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, reps),
                             initializer=_limit_worker_threads) as pool:
        return list(pool.map(_run_repetition, jobs))


def summarize_ensemble(traces):
    """Per-iteration mean and percentile relative errors across repetitions."""
    rel = np.stack([t.relative_errors() for t in traces])
    return {
        "iteration": np.arange(rel.shape[1]),
        "mean_rel_err_pct": np.nanmean(rel, axis=0),
        "p10": np.nanpercentile(rel, 10, axis=0),
        "p90": np.nanpercentile(rel, 90, axis=0),
    }


def write_summary_csv(summary, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_rel_err_pct", "p10", "p90"])
        for i in range(len(summary["iteration"])):
            writer.writerow([int(summary["iteration"][i]),
                             repr(float(summary["mean_rel_err_pct"][i])),
                             repr(float(summary["p10"][i])),
                             repr(float(summary["p90"][i]))])
