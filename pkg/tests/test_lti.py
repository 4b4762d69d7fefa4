import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from densitysteer import lti, matops


def closed_form(t):
    return np.array([[t ** 3 / 3, -t ** 2 / 2], [-t ** 2 / 2, t]])


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_double_integrator_gramian_closed_form(t):
    W = lti.gramian(lti.double_integrator(), t)
    assert np.max(np.abs(W - closed_form(t))) <= 1e-10 * max(1, t ** 3)


def test_gramian_t_zero_and_negative():
    sys = lti.double_integrator()
    assert np.array_equal(lti.gramian(sys, 0.0), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        lti.gramian(sys, -0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 5), st.integers(1, 3), st.floats(0.2, 2.0))
def test_gramian_matches_quadrature(seed, n, m, t):
    sys = lti.random_controllable_system(np.random.default_rng(seed), n, m)
    W = lti.gramian(sys, t)
    ref = lti.gramian_quadrature_oracle(sys, t, 512)
    assert np.linalg.norm(W - ref) <= 1e-8 * np.linalg.norm(ref)
    assert np.allclose(W, W.T, atol=0)
    assert matops.min_eig(W) > 0


def test_gramian_derivative_is_integrand():
    sys = lti.random_controllable_system(np.random.default_rng(4), 3, 2)
    t, h = 0.7, 1e-5
    fd = (lti.gramian(sys, t + h) - lti.gramian(sys, t - h)) / (2 * h)
    assert np.allclose(fd, lti.gramian_integrand(sys, t), atol=1e-7)


def test_controllability():
    assert lti.controllability_check(lti.double_integrator()).controllable
    drift_only = lti.LtiSystem(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]]))
    rep = lti.controllability_check(drift_only)
    assert not rep.controllable and rep.min_sv == 0.0
    with pytest.raises(lti.UncontrollableError):
        lti.require_controllable(drift_only)
    with pytest.raises(ValueError):
        lti.controllability_check(lti.double_integrator(), tol=0.0)


def test_system_validation():
    with pytest.raises(ValueError):
        lti.LtiSystem(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        lti.LtiSystem(np.eye(2), np.ones((3, 1)))
    sys = lti.LtiSystem(np.zeros((2, 2)), np.eye(2))
    assert sys.is_driftless_identity() and not lti.double_integrator().is_driftless_identity()
    with pytest.raises(ValueError):
        sys.A[0, 0] = 1.0


def test_gramian_table_monotone():
    sys = lti.random_controllable_system(np.random.default_rng(2), 4, 2)
    table = lti.gramian_table(sys, 2.0, 40)
    ok, worst = table.psd_monotone()
    assert ok and worst > 0
    assert table.values.shape == (41, 4, 4)
    with pytest.raises(ValueError):
        lti.gramian_table(sys, 1.0, 1)
