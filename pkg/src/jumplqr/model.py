"""Domain types for Markov jump linear systems.

A model bundles per-mode dynamics (A_i, B_i), quadratic weights (Q_i, R_i),
the mode transition matrix, initial distributions, noise levels and the
discount factor.  A policy is one state-feedback gain per mode plus a
Gaussian exploration level sigma.  Mean-square stability of the
discounted closed loop is certified through the spectral radius of the
lifted second-moment propagation operator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadDiscount,
    DimensionMismatch,
    NotPositiveDefinite,
    NotStochastic,
)

MODEL_SCHEMA = "mjls-v1"

# membership margin for the open feasible set: stable iff radius < 1 - TOL_STABILITY
TOL_STABILITY = 1e-9

_TOL_SUM = 1e-12
_TOL_SYM = 1e-12


def _locked(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MjlsModel:
    """Discrete-time Markov jump linear system with a discounted quadratic cost.

    x_{t+1} = A_i x_t + B_i u_t + e_t while the chain is in mode i, with
    e_t ~ N(0, eps^2 I), x_0 ~ N(0, sigma0_cov) and stage cost
    x^T Q_i x + u^T R_i u discounted by gamma.
    """

    n_modes: int
    state_dim: int
    input_dim: int
    A: np.ndarray          # (n_modes, d, d)
    B: np.ndarray          # (n_modes, d, k)
    Q: np.ndarray          # (n_modes, d, d)
    R: np.ndarray          # (n_modes, k, k)
    trans: np.ndarray      # (n_modes, n_modes) row-stochastic
    rho: np.ndarray        # (n_modes,) initial mode distribution
    gamma: float
    eps: float = 0.0
    sigma0_cov: np.ndarray = None  # (d, d), defaults to identity

    def __post_init__(self):
        d = int(self.state_dim)
        cov = np.eye(d) if self.sigma0_cov is None else self.sigma0_cov
        object.__setattr__(self, "n_modes", int(self.n_modes))
        object.__setattr__(self, "state_dim", d)
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "eps", float(self.eps))
        for name in ("A", "B", "Q", "R", "trans", "rho"):
            object.__setattr__(self, name, _locked(getattr(self, name)))
        object.__setattr__(self, "sigma0_cov", _locked(cov))

    def mode_expectation(self, P):
        """Conditional one-step expectation sum_j p_ij P_j for each mode i."""
        return np.einsum("ij,jkl->ikl", self.trans, P)

    def closed_loop(self, gains):
        """Per-mode closed-loop matrices A_i - B_i K_i."""
        return self.A - self.B @ gains

    def to_dict(self):
        return {
            "schema": MODEL_SCHEMA,
            "n_modes": self.n_modes,
            "state_dim": self.state_dim,
            "input_dim": self.input_dim,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "trans": self.trans.tolist(),
            "rho": self.rho.tolist(),
            "gamma": self.gamma,
            "eps": self.eps,
            "sigma0_cov": self.sigma0_cov.tolist(),
        }


@dataclass(frozen=True)
class GainPolicy:
    """State-feedback gains, one k x d matrix per mode, plus exploration level.

    sigma = 0 denotes the deterministic policy u_t = -K_i x_t; sigma > 0
    adds N(0, sigma^2 I) action noise.
    """

    gains: np.ndarray      # (n_modes, k, d)
    sigma: float = 0.0

    def __post_init__(self):
        gains = np.array(self.gains, dtype=float)
        if gains.ndim != 3:
            raise DimensionMismatch(
                f"gains must be a (n_modes, k, d) stack, got shape {gains.shape}"
            )
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n_modes(self):
        return self.gains.shape[0]

    @property
    def stacked(self):
        """Gains concatenated horizontally into a k x (n_modes * d) matrix."""
        n, k, d = self.gains.shape
        return self.gains.transpose(1, 0, 2).reshape(k, n * d)

    @classmethod
    def from_stacked(cls, stacked, n_modes, sigma=0.0):
        k, nd = np.shape(stacked)
        if nd % n_modes:
            raise DimensionMismatch(
                f"stacked gain width {nd} is not divisible by n_modes={n_modes}"
            )
        d = nd // n_modes
        gains = np.asarray(stacked, dtype=float).reshape(k, n_modes, d).transpose(1, 0, 2)
        return cls(gains, sigma)

    def with_sigma(self, sigma):
        return replace(self, sigma=sigma)

    def check_dims(self, model):
        expect = (model.n_modes, model.input_dim, model.state_dim)
        if self.gains.shape != expect:
            raise DimensionMismatch(
                f"policy gains have shape {self.gains.shape}, model expects {expect}"
            )


@dataclass(frozen=True)
class StructureMask:
    """Binary sparsity pattern for structured gains: 1 = free entry, 0 = forced zero."""

    mask: np.ndarray       # (n_modes, k, d) of {0, 1}

    def __post_init__(self):
        mask = np.array(self.mask, dtype=float)
        if mask.ndim != 3:
            raise DimensionMismatch(
                f"mask must be a (n_modes, k, d) stack, got shape {mask.shape}"
            )
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def stacked(self):
        n, k, d = self.mask.shape
        return self.mask.transpose(1, 0, 2).reshape(k, n * d)

    def apply(self, policy):
        """Zero out the masked entries of a policy's gains."""
        return GainPolicy(policy.gains * self.mask, policy.sigma)

    @classmethod
    def observing_states(cls, n_modes, input_dim, state_dim, observed):
        """Mask for static output feedback from a subset of state coordinates."""
        mask = np.zeros((n_modes, input_dim, state_dim))
        mask[:, :, list(observed)] = 1.0
        return cls(mask)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    spectral_radius: float


def _violations(model):
    out = []
    ns, d, k = model.n_modes, model.state_dim, model.input_dim
    for n in (ns, d, k):
        if n < 1:
            out.append(DimensionMismatch(f"dimensions must be positive, got "
                                         f"(n_modes, state_dim, input_dim)=({ns}, {d}, {k})"))
            return out
    shapes = {
        "A": (ns, d, d),
        "B": (ns, d, k),
        "Q": (ns, d, d),
        "R": (ns, k, k),
        "trans": (ns, ns),
        "rho": (ns,),
        "sigma0_cov": (d, d),
    }
    for name, want in shapes.items():
        got = getattr(model, name).shape
        if got != want:
            out.append(DimensionMismatch(f"{name} has shape {got}, expected {want}"))
    if out:
        return out

    if np.any(model.trans < 0):
        i = int(np.argwhere(model.trans < 0)[0][0])
        out.append(NotStochastic(f"trans row {i} has a negative entry"))
    row_sums = model.trans.sum(axis=1)
    bad = np.abs(row_sums - 1.0) > _TOL_SUM
    if bad.any():
        i = int(np.argmax(bad))
        out.append(NotStochastic(f"trans row {i} sums to {row_sums[i]!r}, expected 1"))
    if np.any(model.rho < 0):
        out.append(NotStochastic("rho has a negative entry"))
    if abs(model.rho.sum() - 1.0) > _TOL_SUM:
        out.append(NotStochastic(f"rho sums to {model.rho.sum()!r}, expected 1"))

    for name in ("Q", "R"):
        mats = getattr(model, name)
        for i, M in enumerate(mats):
            if np.max(np.abs(M - M.T)) > _TOL_SYM:
                out.append(NotPositiveDefinite(f"{name}[{i}] is not symmetric"))
            elif np.linalg.eigvalsh(M).min() <= 0:
                out.append(NotPositiveDefinite(f"{name}[{i}] is not positive definite"))

    cov = model.sigma0_cov
    if np.max(np.abs(cov - cov.T)) > _TOL_SYM:
        out.append(NotPositiveDefinite("sigma0_cov is not symmetric"))
    elif np.linalg.eigvalsh(cov).min() < -_TOL_SYM:
        out.append(NotPositiveDefinite("sigma0_cov is not positive semidefinite"))

    if not 0.0 < model.gamma < 1.0:
        out.append(BadDiscount(f"gamma must lie in (0, 1), got {model.gamma}"))
    if model.eps < 0:
        out.append(NotPositiveDefinite(f"eps must be >= 0, got {model.eps}"))
    return out


def list_violations(raw):
    """All invariant violations of a candidate model, in check order."""
    model = raw if isinstance(raw, MjlsModel) else _model_from_fields(raw)
    return _violations(model)


def validate_model(raw):
    """Validate candidate model data and return the immutable model.

    Accepts an MjlsModel or a mapping with the model fields.  Raises the
    first violated invariant (DimensionMismatch, NotStochastic,
    NotPositiveDefinite or BadDiscount), naming the offending field.
    """
    model = raw if isinstance(raw, MjlsModel) else _model_from_fields(raw)
    violations = _violations(model)
    if violations:
        raise violations[0]
    return model


def _model_from_fields(data):
    fields = dict(data)
    fields.pop("schema", None)
    try:
        return MjlsModel(**fields)
    except TypeError as exc:
        raise DimensionMismatch(f"bad model fields: {exc}") from exc


def closed_loop_operator(model, policy):
    """Lifted second-moment propagation matrix of the discounted closed loop.

    Returns the (n_modes*d^2) square matrix T whose block (j, i) is
    gamma * p_ij * kron(Phi_i, Phi_i) with Phi_i = A_i - B_i K_i.  Acting on
    stacked vectorized mode covariances it performs one noiseless step of
    the second-moment recursion.
    """
    policy.check_dims(model)
    ns, d = model.n_modes, model.state_dim
    phi = model.closed_loop(policy.gains)
    T = np.zeros((ns * d * d, ns * d * d))
    for i in range(ns):
        blk = model.gamma * np.kron(phi[i], phi[i])
        for j in range(ns):
            if model.trans[i, j] != 0.0:
                T[j * d * d:(j + 1) * d * d, i * d * d:(i + 1) * d * d] = (
                    model.trans[i, j] * blk
                )
    return T


def is_ms_stabilizing(model, policy):
    """Mean-square stability test for the discounted closed loop.

    The policy is in the feasible set iff the spectral radius of the lifted
    propagation operator is below 1 - TOL_STABILITY.
    """
    T = closed_loop_operator(model, policy)
    radius = float(np.max(np.abs(np.linalg.eigvals(T))))
    return StabilityReport(stable=radius < 1.0 - TOL_STABILITY, spectral_radius=radius)


def mode_marginals(model, horizon):
    """Mode occupation probabilities q(0..horizon); q(0) = rho, q(t+1) = trans^T q(t)."""
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    q = np.empty((horizon + 1, model.n_modes))
    q[0] = model.rho
    for t in range(horizon):
        q[t + 1] = model.trans.T @ q[t]
    return q


def model_from_dict(data):
    """Parse the JSON model schema (mjls-v1) into a validated model."""
    schema = data.get("schema")
    if schema != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {schema!r}, expected {MODEL_SCHEMA!r}")
    return validate_model(data)


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
