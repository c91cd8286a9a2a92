"""Model-free likelihood-ratio gradient estimation from batched rollouts.

Implements the switched-policy score-function estimator with a cumulative
per-timestep baseline: trajectories are processed in index order, the
baseline at step t is the running average of observed reward-to-go values
over trajectories seen so far (including the current one, which is the
stated update order; a leave-one-out variant is available), and the
discounted covariance aggregate is estimated alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import accumulate_scores_kernel
from .errors import AllDiverged, DimensionMismatch, ZeroSigma
from .simulate import simulate_policy_batch, substream

BASELINE_MODES = ("cumulative", "leave_one_out", "none")


@dataclass(frozen=True)
class GradientEstimate:
    """Monte Carlo estimates of the cost gradient and covariance aggregate."""

    grad_K_hat: np.ndarray       # (k, n_modes*d)
    grad_sigma_hat: float
    chi_hat: np.ndarray          # (n_modes*d, n_modes*d), block-diagonal
    n_trajectories: int
    horizon: int
    diverged_count: int


def score_gain(x, u, omega, policy):
    """Gain-block score -(1/sigma^2)(u + K_w x)(e_w kron x)^T at one step.

    Only the active mode's column block is nonzero.
    """
    if policy.sigma == 0:
        raise ZeroSigma("gain score requires sigma > 0")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n, k, d = policy.gains.shape
    innovation = u + policy.gains[omega] @ x
    out = np.zeros((k, n * d))
    out[:, omega * d:(omega + 1) * d] = -np.outer(innovation, x) / policy.sigma**2
    return out


def score_sigma(x, u, omega, policy):
    """Sigma score -k/sigma + ||u + K_w x||^2 / sigma^3 at one step."""
    if policy.sigma == 0:
        raise ZeroSigma("sigma score requires sigma > 0")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    k = policy.gains.shape[1]
    innovation = u + policy.gains[omega] @ x
    return float(-k / policy.sigma + innovation @ innovation / policy.sigma**3)


def reward_to_go(costs, gamma):
    """Discounted tails Qhat[:, t] = sum_{t' >= t} gamma^(t'-t) c_{t'} along axis 1."""
    out = np.empty_like(costs)
    out[:, -1] = costs[:, -1]
    for t in range(costs.shape[1] - 2, -1, -1):
        out[:, t] = costs[:, t] + gamma * out[:, t + 1]
    return out


def _baselines(qhat, valid, mode, baseline_init):
    """Per-trajectory baselines in index order; invalid rows never update them."""
    N, T1 = qhat.shape
    if mode == "none":
        return np.zeros((N, T1))
    v = valid.astype(float)[:, None]
    running = np.cumsum(qhat * v, axis=0)
    counts = np.cumsum(valid.astype(float))[:, None]
    if mode == "cumulative":
        return running / np.maximum(counts, 1.0)
    if mode == "leave_one_out":
        prev_sum = running - qhat * v
        prev_count = counts - v
        init = np.zeros(T1) if baseline_init is None else np.asarray(baseline_init, float)
        b = np.where(prev_count > 0, prev_sum / np.maximum(prev_count, 1.0), init)
        return b
    raise ValueError(f"baseline must be one of {BASELINE_MODES}, got {mode!r}")


def estimate(system, policy, n_trajectories, horizon, gamma, stream,
             baseline="cumulative", baseline_init=None):
    """Batched score-function estimate of the cost gradient and chi.

    stream identifies the batch: an int master seed or a tuple
    (master, iteration, ...); trajectory j uses the substream with spawn key
    (*rest, j).  Diverged rollouts are excluded from all averages and from
    baseline updates, and counted.  Fixed (stream, N, horizon) gives a
    bit-reproducible estimate regardless of parallel schedule.
    """
    if policy.sigma == 0:
        raise ZeroSigma("the score-function estimator requires sigma > 0")
    if n_trajectories < 1:
        raise ValueError(f"n_trajectories must be >= 1, got {n_trajectories}")
    if baseline not in BASELINE_MODES:
        raise ValueError(f"baseline must be one of {BASELINE_MODES}, got {baseline!r}")

    key = stream if isinstance(stream, tuple) else (stream,)
    entropy, rest = key[0], key[1:]
    streams = [substream(entropy, *rest, j) for j in range(n_trajectories)]
    batch = simulate_policy_batch(system, policy, horizon, streams)

    valid = ~batch.diverged
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise AllDiverged(f"all {n_trajectories} rollouts diverged")

    T1 = horizon + 1
    gamma_pow = gamma ** np.arange(T1)
    qhat = reward_to_go(batch.c, gamma)
    b = _baselines(qhat, valid, baseline, baseline_init)
    weights = gamma_pow[None, :] * (qhat - b) * valid[:, None]

    grads, grad_sigma, xcov = accumulate_scores_kernel(
        batch.x, batch.omega, batch.action_noise, weights, gamma_pow,
        batch.valid_len, policy.sigma, system.n_modes,
    )
    grad_K = grads[valid].sum(axis=0) / n_valid
    g_sigma = float(grad_sigma[valid].sum() / n_valid)
    blocks = xcov[valid].sum(axis=0) / n_valid

    d = system.state_dim
    chi = np.zeros((system.n_modes * d, system.n_modes * d))
    for i in range(system.n_modes):
        blk = 0.5 * (blocks[i] + blocks[i].T)
        chi[i * d:(i + 1) * d, i * d:(i + 1) * d] = blk
    return GradientEstimate(
        grad_K_hat=grad_K,
        grad_sigma_hat=g_sigma,
        chi_hat=chi,
        n_trajectories=n_trajectories,
        horizon=horizon,
        diverged_count=n_trajectories - n_valid,
    )


@dataclass(frozen=True)
class RegularizedChi:
    """Regularized covariance aggregate with its conditioning report."""

    matrix: np.ndarray
    floor: float
    condition: float


def regularize_chi(chi_hat, floor=None):
    """Add floor * I to guarantee invertibility of an estimated chi.

    The default floor is 1e-8 * tr(chi)/dim; floor=0 returns the input
    unchanged (a singular matrix then surfaces downstream).
    """
    chi_hat = np.asarray(chi_hat, dtype=float)
    if chi_hat.ndim != 2 or chi_hat.shape[0] != chi_hat.shape[1]:
        raise DimensionMismatch(f"chi must be square, got shape {chi_hat.shape}")
    dim = chi_hat.shape[0]
    if floor is None:
        floor = 1e-8 * np.trace(chi_hat) / dim
    matrix = chi_hat + floor * np.eye(dim)
    return RegularizedChi(matrix=matrix, floor=float(floor),
                          condition=float(np.linalg.cond(matrix)))
