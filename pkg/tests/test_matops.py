import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from densitysteer import matops

square = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-3, 3, width=64)))


@settings(max_examples=80, deadline=None)
@given(square)
def test_expm_matches_scipy(M):
    ref = scipy.linalg.expm(M)
    assert np.allclose(matops.expm(M), ref, rtol=1e-11, atol=1e-12 * np.abs(ref).max())


@settings(max_examples=40, deadline=None)
@given(square, st.floats(0.1, 2.0))
def test_expm_semigroup_and_inverse(M, s):
    # a product of computed factors is accurate to ~eps |F1| |F2|, not to eps |F1 F2|
    E, E_rest, E_inv = matops.expm(M * s), matops.expm(M * (1 - s)), matops.expm(-M * s)
    nrm = lambda X: np.linalg.norm(X, 2)  # noqa: E731
    assert np.max(np.abs(E @ E_rest - matops.expm(M))) <= 1e-11 * nrm(E) * nrm(E_rest)
    assert np.max(np.abs(E @ E_inv - np.eye(len(M)))) <= 1e-11 * nrm(E) * nrm(E_inv)


@pytest.mark.parametrize("scale", [1e-6, 0.1, 1.0, 10.0, 40.0])
def test_expm_across_pade_orders(scale):
    M = scale * np.random.default_rng(1).standard_normal((5, 5))
    ref = scipy.linalg.expm(M)
    assert np.max(np.abs(matops.expm(M) - ref)) <= 1e-12 * max(1.0, np.abs(ref).max()) * 50


def test_expm_edge_cases():
    assert np.array_equal(matops.expm(np.zeros((3, 3))), np.eye(3))
    assert matops.expm(np.zeros((0, 0))).shape == (0, 0)
    # nilpotent: exp(N) = I + N
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert np.allclose(matops.expm(N), np.eye(2) + N, atol=1e-15)
    # rotation generator
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    c, s = np.cos(2.0), np.sin(2.0)
    assert np.allclose(matops.expm(2 * J), [[c, -s], [s, c]], atol=1e-14)
    with pytest.raises(ValueError):
        matops.expm(np.ones((2, 3)))
    with pytest.raises(OverflowError):
        matops.expm(np.array([[1000.0]]))


spd = st.integers(1, 5).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-2, 2, width=64))
).map(lambda G: G @ G.T + 0.1 * np.eye(len(G)))


@settings(max_examples=60, deadline=None)
@given(spd)
def test_spd_sqrt_oracle(S):
    R = matops.spd_sqrt(S)
    assert np.allclose(R, R.T, atol=0)
    assert np.allclose(R @ R, S, atol=1e-10 * np.abs(S).max())
    assert np.linalg.eigvalsh(R)[0] > 0
    Ri = matops.spd_sqrt(S, inverse=True)
    assert np.allclose(R @ Ri, np.eye(len(S)), atol=1e-8)
    assert np.allclose(R, scipy.linalg.sqrtm(S).real, atol=1e-8 * max(1, np.abs(S).max()))


def test_spd_sqrt_rejects_and_clips():
    with pytest.raises(matops.NotPSDError):
        matops.spd_sqrt(np.diag([1.0, -0.1]))
    with pytest.raises(ValueError):
        matops.spd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    # tiny negative roundoff is clipped rather than rejected
    R = matops.spd_sqrt(np.diag([1.0, -1e-14]))
    assert np.allclose(R, np.diag([1.0, 0.0]))
    with pytest.raises(np.linalg.LinAlgError):
        matops.spd_sqrt(np.diag([1.0, 0.0]), inverse=True)


def test_norm_radius_and_singular_values():
    M = np.array([[0.0, 2.0], [0.0, 0.0]])
    norm, radius = matops.norm_and_radius(M)
    assert norm == pytest.approx(2.0) and radius == 0.0
    assert matops.min_singular_value(np.diag([3.0, 0.5])) == pytest.approx(0.5)
    assert matops.min_eig(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0)
    S = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(matops.spd_inv(S) @ S, np.eye(2))
