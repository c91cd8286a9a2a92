import pytest

from jumplqr import MjlsModel, two_mode_output_feedback, two_mode_switching, validate_model


@pytest.fixture(scope="session")
def small_model():
    return two_mode_switching()


@pytest.fixture(scope="session")
def structured_model():
    return two_mode_output_feedback()


def make_scalar_model(a, b, q=1.0, r=1.0, gamma=0.9, eps=0.0, sigma0=1.0):
    """Single-mode scalar system, handy for closed-form oracles."""
    return validate_model(MjlsModel(
        n_modes=1, state_dim=1, input_dim=1,
        A=[[[a]]], B=[[[b]]], Q=[[[q]]], R=[[[r]]],
        trans=[[1.0]], rho=[1.0], gamma=gamma, eps=eps,
        sigma0_cov=[[sigma0]],
    ))


def make_two_mode_scalar(a1=0.7, a2=1.1, b1=1.0, b2=0.8, gamma=0.95, eps=0.0,
                         trans=((0.8, 0.2), (0.3, 0.7)), sigma0=1.0):
    """Two-mode scalar system used by the estimator tests."""
    return validate_model(MjlsModel(
        n_modes=2, state_dim=1, input_dim=1,
        A=[[[a1]], [[a2]]], B=[[[b1]], [[b2]]],
        Q=[[[1.0]], [[2.0]]], R=[[[1.0]], [[1.5]]],
        trans=trans, rho=[0.5, 0.5], gamma=gamma, eps=eps,
        sigma0_cov=[[sigma0]],
    ))
