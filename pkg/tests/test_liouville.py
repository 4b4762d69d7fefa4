import numpy as np
import pytest
from scipy.stats import norm

from densitysteer import diffeo, liouville, lti, steer


@pytest.fixture(scope="module")
def small_run(tanh_plan):
    ens = liouville.sample_ensemble(diffeo.standard_gaussian(2), 300, seed=1)
    return liouville.simulate_closed_loop(tanh_plan, ens, 0.01, record_every=5, block=64)


def test_endpoint_and_shapes(small_run, tanh_plan):
    b = small_run
    assert b.states.shape == (300, 21, 2) and b.controls.shape == (300, 21, 1)
    assert b.times[0] == 0.0 and b.times[-1] == 1.0
    assert not b.flagged.any()
    stats = liouville.endpoint_error(b, tanh_plan.psi)
    assert stats.max < 1e-6 and stats.n_flagged == 0


def test_trajectories_follow_k_map(small_run, tanh_plan):
    for k in (4, 10, 16):
        t = small_run.times[k]
        assert np.allclose(small_run.states[:, k], steer.k_map(tanh_plan, t, small_run.initial),
                           atol=1e-8)


def test_block_and_thread_independence(tanh_plan, small_run):
    ens = liouville.sample_ensemble(diffeo.standard_gaussian(2), 300, seed=1)
    again = liouville.simulate_closed_loop(tanh_plan, ens, 0.01, threads=4, record_every=5,
                                           block=64)
    assert np.array_equal(again.states, small_run.states)
    assert np.array_equal(again.controls, small_run.controls)


def test_step_validation(tanh_plan):
    ens = liouville.sample_ensemble(diffeo.standard_gaussian(2), 4, seed=0)
    with pytest.raises(ValueError):
        liouville.simulate_closed_loop(tanh_plan, ens, 0.5)
    with pytest.raises(ValueError):
        liouville.sample_ensemble(diffeo.standard_gaussian(2), 0, seed=0)
    with pytest.raises(ValueError):
        liouville.ParticleEnsemble(np.zeros((2, 2)), [0.3, 0.3])


def test_energy_distance_gaussian_shift():
    mu = 0.8
    a = liouville.sample_ensemble(diffeo.gaussian([0.0], [[1.0]]), 4000, seed=1)
    b = liouville.sample_ensemble(diffeo.gaussian([mu], [[1.0]]), 4000, seed=2)
    s = np.sqrt(2.0)
    e_xy = s * np.sqrt(2 / np.pi) * np.exp(-mu ** 2 / (2 * s * s)) + mu * (1 - 2 * norm.cdf(-mu / s))
    exact = 2 * e_xy - 2 * (2 / np.sqrt(np.pi))
    assert liouville.energy_distance(a, b) == pytest.approx(exact, abs=0.03)
    assert liouville.energy_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_benamou_brenier_lines_and_cost():
    sys = lti.LtiSystem(np.zeros((2, 2)), np.eye(2))
    psi = diffeo.brenier_gaussian([0, 0], np.eye(2), [1, 2], [[2.0, 0.3], [0.3, 0.6]])
    plan = steer.make_plan(sys, 2.0, psi)
    ens = liouville.sample_ensemble(diffeo.standard_gaussian(2), 200, seed=4)
    b = liouville.simulate_closed_loop(plan, ens, 0.05)
    assert liouville.straight_line_check(b) < 1e-10
    disp = psi.eval(ens.positions) - ens.positions
    assert liouville.transport_cost(b) == pytest.approx(0.5 * np.mean(np.sum(disp ** 2, 1)) / 2.0,
                                                       rel=1e-10)


def test_straight_line_requires_identity_plant(small_run):
    with pytest.raises(ValueError):
        liouville.straight_line_check(small_run)
