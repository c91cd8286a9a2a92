"""Model-based ground truth: coupled Riccati and Lyapunov solvers, exact
costs and discounted state covariances."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NoConvergence, NotStabilizing, SingularMatrix
from .model import GainPolicy, closed_loop_operator, mode_marginals

ARE_TOL = 1e-9
LYAP_TOL = 1e-10
MAX_ITERS = 100_000


@dataclass(frozen=True)
class CoupledValue:
    """Per-mode value matrices P_i and scalar noise offsets z_i."""

    P: np.ndarray                 # (n_modes, d, d)
    z: np.ndarray | None = None   # (n_modes,)


@dataclass(frozen=True)
class ModeCovariances:
    """Per-mode second moments and their discounted aggregate.

    X[t, i] is E[x_t x_t^T 1{mode_t = i}]; chi is the block-diagonal
    discounted sum over t; chi_modes holds its diagonal blocks.
    """

    X: np.ndarray | None = None          # (T+1, n_modes, d, d)
    q: np.ndarray | None = None          # (T+1, n_modes)
    chi: np.ndarray | None = None        # (n_modes*d, n_modes*d)
    chi_modes: np.ndarray | None = None  # (n_modes, d, d)


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def riccati_rhs(model, P):
    """One step of Riccati value iteration applied to the stacked P."""
    E = model.mode_expectation(P)
    g = model.gamma
    out = np.empty_like(P)
    for i in range(model.n_modes):
        BtE = model.B[i].T @ E[i]
        M = model.R[i] + g * BtE @ model.B[i]
        cross = BtE @ model.A[i]
        out[i] = (
            model.Q[i]
            + g * model.A[i].T @ E[i] @ model.A[i]
            - g * g * cross.T @ np.linalg.solve(M, cross)
        )
    return _sym(out)


def solve_coupled_are(model, tol=ARE_TOL, max_iters=MAX_ITERS):
    """Stationary solution of the coupled Riccati equations by value iteration.

    Starts from P = Q and iterates until the fixed-point residual satisfies
    ||rhs(P) - P|| <= tol * (1 + ||P||) mode-wise.  Raises NoConvergence when
    the iteration diverges or exhausts max_iters, which signals a
    non-stabilizable system or a discount too close to 1.
    """
    P = model.Q.copy()
    for m in range(max_iters):
        Pn = riccati_rhs(model, P)
        norms = np.array([np.linalg.norm(Pn[i], 2) for i in range(model.n_modes)])
        if norms.max() > 1e14:
            raise NoConvergence(
                f"Riccati value iteration diverged after {m + 1} iterations",
                iterations=m + 1,
            )
        diffs = np.array([np.linalg.norm(Pn[i] - P[i], 2) for i in range(model.n_modes)])
        P = Pn
        if np.all(diffs <= 0.1 * tol * (1.0 + norms)):
            break
    else:
        raise NoConvergence(
            f"Riccati value iteration did not converge in {max_iters} iterations",
            iterations=max_iters,
        )
    resid = riccati_rhs(model, P) - P
    for i in range(model.n_modes):
        if np.linalg.norm(resid[i], 2) > tol * (1.0 + np.linalg.norm(P[i], 2)):
            raise NoConvergence(f"Riccati residual too large in mode {i}")
    return CoupledValue(P=P)


def optimal_gains(model, value):
    """Optimal mode-wise feedback K_i = gamma (R_i + gamma B^T E_i(P) B)^{-1} B^T E_i(P) A_i."""
    E = model.mode_expectation(value.P)
    g = model.gamma
    gains = np.empty((model.n_modes, model.input_dim, model.state_dim))
    for i in range(model.n_modes):
        BtE = model.B[i].T @ E[i]
        M = model.R[i] + g * BtE @ model.B[i]
        try:
            gains[i] = g * np.linalg.solve(M, BtE @ model.A[i])
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix(f"gain system singular in mode {i}") from exc
    return GainPolicy(gains, sigma=0.0)


def solve_coupled_lyapunov(model, policy, tol=LYAP_TOL):
    """Per-mode cost-to-go matrices of a fixed policy.

    Solves P_i = Q_i + K_i^T R_i K_i + gamma Phi_i^T E_i(P) Phi_i as one
    linear system in the stacked vectorized unknowns ((I - T^T) form, with T
    the closed-loop propagation operator).  Positive definiteness of the
    solution certifies mean-square stability of the discounted loop, since
    the driving terms are positive definite; NotStabilizing otherwise.
    """
    policy.check_dims(model)
    ns, d = model.n_modes, model.state_dim
    T = closed_loop_operator(model, policy)
    drive = np.empty((ns, d, d))
    for i in range(ns):
        drive[i] = model.Q[i] + policy.gains[i].T @ model.R[i] @ policy.gains[i]
    try:
        sol = np.linalg.solve(np.eye(ns * d * d) - T.T, drive.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NotStabilizing("coupled Lyapunov system is singular") from exc
    P = _sym(sol.reshape(ns, d, d))
    for i in range(ns):
        if np.linalg.eigvalsh(P[i]).min() <= 0:
            raise NotStabilizing(
                f"Lyapunov solution indefinite in mode {i}; policy is outside the feasible set"
            )
    phi = model.closed_loop(policy.gains)
    E = model.mode_expectation(P)
    for i in range(ns):
        resid = drive[i] + model.gamma * phi[i].T @ E[i] @ phi[i] - P[i]
        if np.linalg.norm(resid, 2) > tol * (1.0 + np.linalg.norm(P[i], 2)):
            raise NoConvergence(f"Lyapunov residual too large in mode {i}")
    return CoupledValue(P=P)


def solve_z(model, value, sigma):
    """Per-mode noise offsets z = (I - gamma*trans)^{-1} b.

    b_i collects the injected action noise sigma^2 tr(R_i + gamma B^T E_i(P) B)
    and process noise gamma eps^2 tr(E_i(P)).  The system is provably
    nonsingular for gamma < 1 and row-stochastic trans.
    """
    E = model.mode_expectation(value.P)
    g = model.gamma
    ns = model.n_modes
    b = np.empty(ns)
    for i in range(ns):
        M = model.R[i] + g * model.B[i].T @ E[i] @ model.B[i]
        b[i] = sigma**2 * np.trace(M) + g * model.eps**2 * np.trace(E[i])
    z = np.linalg.solve(np.eye(ns) - g * model.trans, b)
    return replace(value, z=z)


def evaluate_cost(model, policy):
    """Exact discounted cost of a policy: sum_i rho_i (tr(P_i Sigma0) + z_i)."""
    value = solve_z(model, solve_coupled_lyapunov(model, policy), policy.sigma)
    traces = np.einsum("ijk,kj->i", value.P, model.sigma0_cov)
    return float(model.rho @ (traces + value.z))


def covariance_sequence(model, policy, horizon):
    """Mode-conditional second moments X_i(t) for t = 0..horizon.

    X_i(0) = rho_i Sigma0 and X_j(t+1) = sum_i p_ij (Phi_i X_i Phi_i^T +
    (sigma^2 B_i B_i^T + eps^2 I) q_i(t)), with the mode indicator taken in
    expectation through the marginals q.
    """
    policy.check_dims(model)
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    ns, d = model.n_modes, model.state_dim
    q = mode_marginals(model, horizon)
    phi = model.closed_loop(policy.gains)
    noise = np.empty((ns, d, d))
    for i in range(ns):
        noise[i] = policy.sigma**2 * model.B[i] @ model.B[i].T + model.eps**2 * np.eye(d)
    X = np.zeros((horizon + 1, ns, d, d))
    X[0] = model.rho[:, None, None] * model.sigma0_cov
    for t in range(horizon):
        prop = np.einsum("ikl,ilm,inm->ikn", phi, X[t], phi)
        inject = q[t, :, None, None] * noise
        X[t + 1] = np.einsum("ij,ikl->jkl", model.trans, prop + inject)
        X[t + 1] = _sym(X[t + 1])
    return ModeCovariances(X=X, q=q)


def _chi_rhs(model, policy):
    """Stacked driving term of the discounted covariance fixed point."""
    ns, d = model.n_modes, model.state_dim
    s0 = (model.rho[:, None, None] * model.sigma0_cov).reshape(-1)
    occupancy = np.linalg.solve(np.eye(ns) - model.gamma * model.trans.T, model.rho)
    inject = np.zeros((ns, d, d))
    for i in range(ns):
        W = policy.sigma**2 * model.B[i] @ model.B[i].T + model.eps**2 * np.eye(d)
        for j in range(ns):
            inject[j] += model.trans[i, j] * occupancy[i] * W
    return s0 + model.gamma * inject.reshape(-1)


def compute_chi(model, policy, method="solve", horizon=None, tail_tol=1e-10,
                assume_stabilizing=False):
    """Discounted aggregate of mode covariances chi = sum_t gamma^t diag(X_i(t)).

    method="solve" computes the exact fixed point (I - T) xbar = driving
    terms; method="truncated" accumulates the series, either to an explicit
    horizon or until a spectral-radius tail bound drops below tail_tol.
    Set assume_stabilizing=True to skip the feasibility check when the
    caller has already certified the policy.
    """
    policy.check_dims(model)
    ns, d = model.n_modes, model.state_dim
    if not assume_stabilizing:
        solve_coupled_lyapunov(model, policy)  # raises NotStabilizing outside the feasible set

    if method == "solve":
        T = closed_loop_operator(model, policy)
        sol = np.linalg.solve(np.eye(ns * d * d) - T, _chi_rhs(model, policy))
        blocks = _sym(sol.reshape(ns, d, d))
    elif method == "truncated":
        blocks = _chi_truncated(model, policy, horizon, tail_tol)
    else:
        raise ValueError(f"unknown method {method!r}")

    chi = np.zeros((ns * d, ns * d))
    for i in range(ns):
        chi[i * d:(i + 1) * d, i * d:(i + 1) * d] = blocks[i]
    return ModeCovariances(chi=chi, chi_modes=blocks)


def _chi_truncated(model, policy, horizon, tail_tol):
    ns, d = model.n_modes, model.state_dim
    if horizon is not None:
        cov = covariance_sequence(model, policy, horizon)
        weights = model.gamma ** np.arange(horizon + 1)
        return np.einsum("t,tikl->ikl", weights, cov.X)

    T = closed_loop_operator(model, policy)
    radius = float(np.max(np.abs(np.linalg.eigvals(T))))
    rate = max(radius, model.gamma)
    if rate >= 1.0:
        raise NotStabilizing(f"series does not converge (rate {rate:.6g} >= 1)")
    q = model.rho.copy()
    phi = model.closed_loop(policy.gains)
    noise = np.stack([
        policy.sigma**2 * model.B[i] @ model.B[i].T + model.eps**2 * np.eye(d)
        for i in range(ns)
    ])
    X = model.rho[:, None, None] * model.sigma0_cov
    total = np.zeros((ns, d, d))
    scale = 1.0
    small_streak = 0
    for t in range(1_000_000):
        total += scale * X
        term = scale * sum(np.linalg.norm(X[i]) for i in range(ns))
        if term * rate / (1.0 - rate) < tail_tol:
            small_streak += 1
            if small_streak >= 5:
                break
        else:
            small_streak = 0
        prop = np.einsum("ikl,ilm,inm->ikn", phi, X, phi)
        X = _sym(np.einsum("ij,ikl->jkl", model.trans, prop + q[:, None, None] * noise))
        q = model.trans.T @ q
        scale *= model.gamma
    return _sym(total)
