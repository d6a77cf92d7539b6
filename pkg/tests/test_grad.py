import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfa.grad import (_basis_key, batch_gradient, finite_difference_gradient, rollout,
                      trajectory_gradient)
from cfa.model import Horizon, StorageParams
from cfa.policy import FallbackUsed, Theta
from helpers import flat_path, path_for

PARAMS = StorageParams()
HZ = Horizon(24, 8)
KINDS = ("constant", "lookup", "exponential", "capacity")


def random_theta(kind, rng, H=8):
    base = Theta.identity(kind, H)
    if kind == "capacity":
        # keep the reserve small so the lookahead stays feasible
        return Theta.capacity(rng.uniform(0.6, 1.0), rng.uniform(0.0, 0.05))
    return base.with_values(rng.uniform(base.lower + 0.05, base.upper - 0.05))


@pytest.fixture(autouse=True)
def _quiet_fallback():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FallbackUsed)
        yield


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(KINDS))
def test_gradient_is_sum_of_period_terms(seed, kind):
    rng = np.random.default_rng(seed)
    est, res = trajectory_gradient(random_theta(kind, rng), path_for(seed), HZ, PARAMS)
    total = np.sum(est.per_period_terms, axis=0)
    np.testing.assert_allclose(est.g, total, atol=1e-8, rtol=1e-12)
    assert len(est.per_period_terms) == len(res.per_period) == len(est.basis_change_flags)


@pytest.mark.parametrize("kind", KINDS)
def test_matches_central_differences(kind):
    rng = np.random.default_rng(KINDS.index(kind))
    checked = 0
    for seed in range(6):
        theta = random_theta(kind, rng)
        path = path_for(100 + seed, sigma_f=float(rng.choice([20, 25, 30, 35])))
        est, _ = trajectory_gradient(theta, path, HZ, PARAMS)
        fd = finite_difference_gradient(theta, path, HZ, PARAMS, h=1e-4)
        for i in range(theta.size):
            if fd.component_flags[i]:
                continue
            checked += 1
            assert est.g[i] == pytest.approx(fd.g[i], rel=1e-3, abs=1e-6)
    assert checked > 0


def test_no_wind_means_zero_constant_gradient():
    path = flat_path(12, 6, E=0, P=30, D=80, G=100)
    est, _ = trajectory_gradient(Theta.constant(0.7), path, Horizon(12, 6), PARAMS)
    assert np.all(est.g == 0)


def test_slack_capacity_has_zero_upper_gradient():
    # a huge store never fills inside any lookahead
    params = StorageParams(R_max=1e5)
    est, _ = trajectory_gradient(Theta.capacity(1.0, 0.0), path_for(3), HZ, params)
    assert est.g[0] == 0


def test_zero_length_horizon():
    path = flat_path(0, 0, E=20, P=30, D=50, G=60)
    hz = Horizon(0, 0)
    for th in (Theta.constant(0.5), Theta.exponential(0.5, -0.2)):
        est, _ = trajectory_gradient(th, path, hz, PARAMS)
        fd = finite_difference_gradient(th, path, hz, PARAMS)
        assert np.all(est.g == 0) and np.all(fd.g == 0)


def test_exponential_finite_differences_converge_quadratically():
    ratios = []
    for seed in range(8):
        path = path_for(seed, 30.0)
        theta = Theta.exponential(0.8, -0.15)
        est, _ = trajectory_gradient(theta, path, HZ, PARAMS)
        errs = []
        for h in (2e-3, 1e-3):
            fd = finite_difference_gradient(theta, path, HZ, PARAMS, h=h)
            if fd.component_flags[1]:
                break
            errs.append(abs(fd.g[1] - est.g[1]))
        else:
            if errs[1] > 1e-6:
                ratios.append(errs[0] / errs[1])
    assert len(ratios) >= 2
    for r in ratios:
        assert 3.5 < r < 4.5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["constant", "lookup", "capacity"]))
def test_piecewise_linear_within_a_cell(seed, kind):
    rng = np.random.default_rng(seed)
    theta = random_theta(kind, rng)
    path = path_for(seed)
    d = rng.normal(size=theta.size)
    d *= 1e-5 / np.linalg.norm(d)
    pts = [theta.with_values(theta.values + k * d) for k in (-1, 0, 1)]
    runs = [rollout(p, path, HZ, PARAMS) for p in pts]
    keys = [[_basis_key(s) for s in steps] for _, steps in runs]
    if not (keys[0] == keys[1] == keys[2]):
        return  # a kink between the points
    F = [res.cumulative_reward for res, _ in runs]
    scale = max(1.0, max(abs(f) for f in F))
    assert abs(F[2] - 2 * F[1] + F[0]) <= 1e-8 * scale
    est, _ = trajectory_gradient(theta, path, HZ, PARAMS)
    assert (F[2] - F[0]) / 2 == pytest.approx(est.g @ d, rel=1e-4, abs=1e-8 * scale)


def test_kink_detection_flags_are_booleans():
    est, _ = trajectory_gradient(Theta.constant(0.6), path_for(2), HZ, PARAMS, detect_kinks=True)
    assert all(isinstance(f, bool) for f in est.basis_change_flags)


def test_batch_gradient_is_order_independent():
    theta = Theta.lookup(np.linspace(0.4, 1.2, 8))
    paths = [path_for(s) for s in range(5)]
    g1, F1 = batch_gradient(theta, paths, HZ, PARAMS)
    g2, F2 = batch_gradient(theta, paths[::-1], HZ, PARAMS)
    np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-10)
    assert abs(F1 - F2) <= 1e-10
    singles = [trajectory_gradient(theta, p, HZ, PARAMS)[0].g for p in paths]
    np.testing.assert_allclose(g1, np.mean(singles, axis=0), rtol=1e-12)
