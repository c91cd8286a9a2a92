"""Seeded stochastic simulation of jump-linear dynamics under Gaussian
state-feedback policies.

Learners interact with the dynamics only through BlackBoxSystem, which
exposes dimensions, the discount, and reset/step observations; the model
matrices are never reachable from that surface.

Randomness is counter-based (Philox) with splittable substreams: the
stream for trajectory j of iteration n is derived as
SeedSequence(master, spawn_key=(n, j)), so results are independent of how
many rollouts run concurrently.  Each trajectory consumes its stream in a
fixed block layout: mode uniforms (T+1), initial-state normals (d), action
normals ((T+1)*k, drawn only when sigma > 0), process normals (T*d, drawn
only when eps > 0).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._kernels import simulate_batch_kernel
from .errors import DimensionMismatch

# state norm at which a rollout is aborted and tagged diverged
DIVERGENCE_NORM = 1e8


def substream(entropy, *key):
    """Deterministic Philox generator for the given master entropy and key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy, spawn_key=key)))


def as_generator(stream):
    """Coerce an int, tuple, SeedSequence or Generator into a Generator."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(stream))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(stream)))


def init_state_factor(sigma0_cov):
    """Matrix F with F F^T = Sigma0, used to color standard-normal draws."""
    try:
        return np.linalg.cholesky(sigma0_cov)
    except np.linalg.LinAlgError:
        # positive semidefinite case
        vals, vecs = np.linalg.eigh(sigma0_cov)
        return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


@dataclass(frozen=True)
class Trajectory:
    """One observed rollout: states, actions, modes and nonnegative stage costs.

    Arrays cover t = 0..T; a diverged rollout is truncated at the first state
    exceeding the divergence norm and tagged.
    """

    x: np.ndarray        # (T+1, d)
    u: np.ndarray        # (T+1, k)
    omega: np.ndarray    # (T+1,) int mode indices
    c: np.ndarray        # (T+1,) stage costs
    diverged: bool = False

    def __len__(self):
        return self.x.shape[0]


def sample_mode_chain(trans, rho, horizon, stream):
    """Sample a mode path: omega_0 ~ rho, omega_{t+1} ~ row omega_t of trans."""
    gen = as_generator(stream)
    trans = np.asarray(trans, dtype=float)
    rho = np.asarray(rho, dtype=float)
    uniforms = gen.random(horizon + 1)
    cum_rho = np.cumsum(rho)
    cum_trans = np.cumsum(trans, axis=1)
    omega = np.empty(horizon + 1, dtype=np.int64)
    omega[0] = min(int(np.searchsorted(cum_rho, uniforms[0], side="right")), len(rho) - 1)
    for t in range(horizon):
        row = cum_trans[omega[t]]
        omega[t + 1] = min(int(np.searchsorted(row, uniforms[t + 1], side="right")),
                           len(rho) - 1)
    return omega


class BlackBoxSystem:
    """Opaque simulator handle: a model plus a master seed, observed via reset/step.

    Only dimensions, the discount and (x, omega, c) observations are exposed;
    the dynamics, weights and transition matrix stay private.
    """

    def __init__(self, model, master_seed=0):
        self._model = model
        self._factor = init_state_factor(model.sigma0_cov)
        self._cum_rho = np.cumsum(model.rho)
        self._cum_trans = np.cumsum(model.trans, axis=1)
        self.master_seed = master_seed
        self._state = None

    @property
    def n_modes(self):
        return self._model.n_modes

    @property
    def state_dim(self):
        return self._model.state_dim

    @property
    def input_dim(self):
        return self._model.input_dim

    @property
    def gamma(self):
        return self._model.gamma

    def stream(self, *key):
        """Substream of this system's master seed for the given key."""
        return substream(self.master_seed, *key)

    def reset(self, stream=None, horizon=0):
        """Draw x_0 and omega_0; pre-draws the mode path for `horizon` steps."""
        gen = as_generator(stream) if stream is not None else self.stream(0)
        uniforms = gen.random(horizon + 1)
        x0 = self._factor @ gen.standard_normal(self._model.state_dim)
        omega0 = min(int(np.searchsorted(self._cum_rho, uniforms[0], side="right")),
                     self._model.n_modes - 1)
        self._state = {
            "gen": gen,
            "x": x0,
            "omega": omega0,
            "t": 0,
            "horizon": horizon,
            "uniforms": uniforms,
            "proc": None,
        }
        return x0.copy(), omega0

    def step(self, u):
        """Apply an action; returns (x_next, omega_next, cost at the current stage).

        The call at t = horizon only scores the final stage: it returns the
        unchanged state and mode with the last cost.
        """
        st = self._state
        if st is None:
            raise RuntimeError("call reset() before step()")
        if st["t"] > st["horizon"]:
            raise RuntimeError("stepped past the horizon given to reset()")
        m = self._model
        u = np.asarray(u, dtype=float)
        if u.shape != (m.input_dim,):
            raise DimensionMismatch(f"action has shape {u.shape}, expected ({m.input_dim},)")
        if st["proc"] is None:
            if m.eps > 0 and st["horizon"] > 0:
                st["proc"] = m.eps * st["gen"].standard_normal((st["horizon"], m.state_dim))
            else:
                st["proc"] = np.zeros((max(st["horizon"], 1), m.state_dim))
        t, x, w = st["t"], st["x"], st["omega"]
        cost = float(x @ m.Q[w] @ x + u @ m.R[w] @ u)
        if t == st["horizon"]:
            st["t"] = t + 1
            return x.copy(), w, cost
        x_next = m.A[w] @ x + m.B[w] @ u + st["proc"][t]
        w_next = min(int(np.searchsorted(self._cum_trans[w], st["uniforms"][t + 1],
                                         side="right")), m.n_modes - 1)
        st["x"], st["omega"], st["t"] = x_next, w_next, t + 1
        return x_next.copy(), w_next, cost


def rollout(system, policy, horizon, stream):
    """Simulate one closed-loop trajectory under u_t ~ N(-K_i x_t, sigma^2 I).

    Deterministic given the stream.  A state exceeding DIVERGENCE_NORM aborts
    the rollout; the partial trajectory is returned tagged diverged.
    """
    m_k = system.input_dim
    gen = as_generator(stream)
    x, omega = system.reset(gen, horizon)
    if policy.sigma > 0:
        act = policy.sigma * gen.standard_normal((horizon + 1, m_k))
    else:
        act = np.zeros((horizon + 1, m_k))

    xs = np.empty((horizon + 1, system.state_dim))
    us = np.empty((horizon + 1, m_k))
    oms = np.empty(horizon + 1, dtype=np.int64)
    cs = np.empty(horizon + 1)
    for t in range(horizon + 1):
        if np.linalg.norm(x) > DIVERGENCE_NORM:
            return Trajectory(xs[:t].copy(), us[:t].copy(), oms[:t].copy(), cs[:t].copy(),
                              diverged=True)
        xs[t], oms[t] = x, omega
        u = -policy.gains[omega] @ x + act[t]
        us[t] = u
        x, omega, cs[t] = system.step(u)
    return Trajectory(xs, us, oms, cs)


def discounted_return(traj, gamma, t_start=0):
    """Reward-to-go sum_{t=t_start}^{T} gamma^(t - t_start) c_t, by backward recursion."""
    T = len(traj) - 1
    if not 0 <= t_start <= T:
        raise ValueError(f"t_start must lie in [0, {T}], got {t_start}")
    acc = 0.0
    for t in range(T, t_start - 1, -1):
        acc = traj.c[t] + gamma * acc
    return float(acc)


@dataclass(frozen=True)
class BatchRollouts:
    """Vectorized rollout batch; row n is valid for t < valid_len[n]."""

    x: np.ndarray            # (N, T+1, d)
    omega: np.ndarray        # (N, T+1)
    c: np.ndarray            # (N, T+1)
    action_noise: np.ndarray  # (N, T+1, k) standard normals actually injected
    valid_len: np.ndarray    # (N,)

    @property
    def diverged(self):
        return self.valid_len < self.x.shape[1]


def simulate_policy_batch(system, policy, horizon, streams):
    """Roll out one trajectory per stream with the compiled batch kernel.

    Equivalent to calling rollout() once per stream (same noise layout, same
    mode chains); trajectories are mutually independent so the batch result
    does not depend on execution order.
    """
    model = system._model
    policy.check_dims(model)
    N = len(streams)
    d, k = model.state_dim, model.input_dim
    T1 = horizon + 1
    mode_u = np.empty((N, T1))
    x0_raw = np.empty((N, d))
    act = np.zeros((N, T1, k))
    proc = np.zeros((N, max(horizon, 1), d))
    draw_act = policy.sigma > 0
    draw_proc = model.eps > 0 and horizon > 0
    for n, stream in enumerate(streams):
        gen = as_generator(stream)
        mode_u[n] = gen.random(T1)
        x0_raw[n] = gen.standard_normal(d)
        if draw_act:
            act[n] = gen.standard_normal((T1, k))
        if draw_proc:
            proc[n] = gen.standard_normal((horizon, d))
    x, omega, c, valid_len = simulate_batch_kernel(
        model.A, model.B, policy.gains, model.Q, model.R,
        np.cumsum(model.trans, axis=1), np.cumsum(model.rho),
        policy.sigma, model.eps, init_state_factor(model.sigma0_cov),
        x0_raw, mode_u, act, proc,
    )
    return BatchRollouts(x=x, omega=omega, c=c, action_noise=act, valid_len=valid_len)


def write_trajectory_csv(traj, path):
    """Dump a trajectory as CSV with columns t, omega, x_1..x_d, u_1..u_k, c."""
    d = traj.x.shape[1]
    k = traj.u.shape[1]
    header = (["t", "omega"] + [f"x_{i + 1}" for i in range(d)]
              + [f"u_{i + 1}" for i in range(k)] + ["c"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(len(traj)):
            writer.writerow([t, int(traj.omega[t])] + [repr(v) for v in traj.x[t]]
                            + [repr(v) for v in traj.u[t]] + [repr(float(traj.c[t]))])
