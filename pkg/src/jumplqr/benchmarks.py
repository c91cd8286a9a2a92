"""Built-in benchmark models.

Both use gamma = 0.99 and an initial state x_0 ~ N(0, I/12); the 1/12
second moment corresponds to a centered unit-box initial draw and fixes
the absolute scale of the reference costs.
"""

import numpy as np

from .model import MjlsModel, StructureMask, validate_model

# E[x0 x0^T] of a uniform draw on [-1/2, 1/2]^d
INITIAL_COV_SCALE = 1.0 / 12.0


def two_mode_switching():
    """Two switching modes, three states, one input.

    Neither mode is stabilizable on its own (each A_i has an eigenvalue on
    the unit circle) but the switched system is, and the zero-gain policy
    is feasible.
    """
    A1 = [[0.4, 0.6, -0.1],
          [-0.4, -0.6, 0.3],
          [0.0, 0.0, 1.0]]
    A2 = [[0.9, 0.5, -0.1],
          [0.0, 1.0, 0.0],
          [-0.1, 0.5, -0.4]]
    B1 = [[1.0], [1.0], [0.0]]
    B2 = [[1.0], [0.0], [1.0]]
    model = MjlsModel(
        n_modes=2, state_dim=3, input_dim=1,
        A=[A1, A2], B=[B1, B2],
        Q=[np.eye(3), 2.0 * np.eye(3)],
        R=[[[1.0]], [[2.0]]],
        trans=[[0.7, 0.3], [0.4, 0.6]],
        rho=[0.5, 0.5],
        gamma=0.99, eps=0.0,
        sigma0_cov=INITIAL_COV_SCALE * np.eye(3),
    )
    return validate_model(model)


def two_mode_output_feedback():
    """Two-mode, two-state, two-input system used for structured control studies.

    The structured variant can only measure the first state, i.e. gains are
    restricted to the pattern [[*, 0], [*, 0]] in every mode.
    """
    A1 = [[-0.4, 1.0], [0.0, 0.9]]
    A2 = [[0.0, 1.0], [-0.4, 0.9]]
    B = [[1.0, 0.5], [0.0, 2.0]]
    model = MjlsModel(
        n_modes=2, state_dim=2, input_dim=2,
        A=[A1, A2], B=[B, B],
        Q=[np.diag([10.0, 20.0])] * 2,
        R=[np.eye(2)] * 2,
        trans=[[0.8, 0.2], [0.3, 0.7]],
        rho=[0.5, 0.5],
        gamma=0.99, eps=0.0,
        sigma0_cov=INITIAL_COV_SCALE * np.eye(2),
    )
    return validate_model(model)


def first_state_feedback_mask():
    """Structure mask for the output-feedback benchmark: observe state 1 only."""
    return StructureMask.observing_states(n_modes=2, input_dim=2, state_dim=2,
                                          observed=[0])


BUILTIN_MODELS = {
    "small441": two_mode_switching,
    "structured443": two_mode_output_feedback,
}


def builtin_model(name):
    """Resolve a built-in benchmark by registry name."""
    try:
        return BUILTIN_MODELS[name]()
    except KeyError:
        raise KeyError(
            f"unknown builtin model {name!r}; available: {sorted(BUILTIN_MODELS)}"
        ) from None
