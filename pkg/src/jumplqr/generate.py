"""Random benchmark generation: per-mode stable dynamics and
Dirichlet-sampled irreducible transition matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenerationFailed
from .model import GainPolicy, MjlsModel, is_ms_stabilizing, validate_model
from .simulate import substream


@dataclass(frozen=True)
class GenSpec:
    """Shape and randomness parameters for a generated benchmark model.

    The default Dirichlet concentration 99*I + 1 puts most transition mass
    on the diagonal while keeping every entry strictly positive, which makes
    the sampled chain irreducible almost surely.
    """

    n_modes: int
    state_dim: int
    input_dim: int
    spectral_cap: float = 0.95
    dirichlet_concentration: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.spectral_cap < 1:
            raise ValueError(f"spectral_cap must lie in (0, 1), got {self.spectral_cap}")
        conc = self.dirichlet_concentration
        if conc is None:
            conc = 99.0 * np.eye(self.n_modes) + 1.0
        conc = np.array(conc, dtype=float)
        if conc.shape != (self.n_modes, self.n_modes):
            raise ValueError(f"concentration must be {self.n_modes}x{self.n_modes}, "
                             f"got shape {conc.shape}")
        if np.any(conc <= 0):
            raise ValueError("concentration entries must be > 0")
        conc.setflags(write=False)
        object.__setattr__(self, "dirichlet_concentration", conc)


def gen_stable_mode(spec, stream):
    """One random mode (A_i, B_i) with spectral radius of A_i in [0.2, cap].

    A dense Gaussian matrix is rescaled to a uniformly drawn target radius;
    B is dense Gaussian scaled by 1/sqrt(d).
    """
    d, k = spec.state_dim, spec.input_dim
    A = stream.standard_normal((d, d))
    target = stream.uniform(0.2, spec.spectral_cap)
    radius = np.max(np.abs(np.linalg.eigvals(A)))
    A *= target / radius
    B = stream.standard_normal((d, k)) / np.sqrt(d)
    return A, B


def gen_transition(spec, stream):
    """Row-stochastic matrix with each row Dirichlet-sampled; all entries > 0."""
    rows = [stream.dirichlet(spec.dirichlet_concentration[i]) for i in range(spec.n_modes)]
    return np.stack(rows)


def gen_model(spec, gamma=0.99, eps=0.0, max_retries=100):
    """Complete random benchmark model with identity weights and uniform rho.

    Mode stability of every A_i does not by itself bound the joint
    mean-square radius, so generation resamples until the zero-gain policy
    passes the explicit stability check; GenerationFailed after max_retries.
    """
    ns, d, k = spec.n_modes, spec.state_dim, spec.input_dim
    for attempt in range(max_retries):
        stream = substream(spec.seed, attempt)
        A = np.empty((ns, d, d))
        B = np.empty((ns, d, k))
        for i in range(ns):
            A[i], B[i] = gen_stable_mode(spec, stream)
        model = MjlsModel(
            n_modes=ns, state_dim=d, input_dim=k,
            A=A, B=B,
            Q=np.stack([np.eye(d)] * ns), R=np.stack([np.eye(k)] * ns),
            trans=gen_transition(spec, stream),
            rho=np.full(ns, 1.0 / ns),
            gamma=gamma, eps=eps, sigma0_cov=np.eye(d),
        )
        validate_model(model)
        zero = GainPolicy(np.zeros((ns, k, d)), 0.0)
        if is_ms_stabilizing(model, zero).stable:
            return model
    raise GenerationFailed(
        f"no mean-square stable model found in {max_retries} attempts "
        f"(n_modes={ns}, d={d}, gamma={gamma})"
    )
