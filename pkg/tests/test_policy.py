import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfa import lp
from cfa.model import Decision, Horizon, State, StorageParams, check_feasible, contribution_coefficients, simulate
from cfa.policy import (AssemblyError, FallbackUsed, LookaheadPolicy, Theta, assemble, decide,
                        repair)
from helpers import path_for
from oracles import enumerate_lp

PARAMS = StorageParams()
HZ = Horizon(24, 8)


def identity_thetas(H):
    return [Theta.constant(1.0), Theta.lookup(np.ones(H)), Theta.exponential(1.0, 0.0),
            Theta.capacity(1.0, 0.0)]


def test_benchmark_and_constant_one_build_same_lp():
    path = path_for(1)
    s = State(30.0, path.E[3], path.P[3], path.D[3], path.G[3])
    a = assemble(Theta.benchmark(), s, path, 3, HZ, PARAMS).problem
    b = assemble(Theta.constant(1.0), s, path, 3, HZ, PARAMS).problem
    for k in ("c", "A", "b"):
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))


def test_lookup_zero_clears_future_wind_rows():
    path = path_for(2)
    s = State(10.0, path.E[0], path.P[0], path.D[0], path.G[0])
    asm = assemble(Theta.lookup(np.zeros(8)), s, path, 0, HZ, PARAMS)
    for i, (tau, kind) in enumerate(asm.row_map):
        if kind == "wind":
            assert asm.problem.b[i] == (path.E[0] if tau == 0 else 0.0)


def test_two_period_rhs_by_hand():
    T, H = 1, 1
    path = path_for(4, T=T, H=H)
    p = StorageParams(R_max=100, gamma_c=20, gamma_d=25)
    R = 35.0
    s = State(R, path.E[0], path.P[0], path.D[0], path.G[0])
    theta = Theta.constant(0.5)
    asm = assemble(theta, s, path, 0, Horizon(T, H), p)
    FE = path.F_E[0]
    expect = [
        path.D[0], path.G[0], R, 100 - R, FE[0], 20, 25,
        path.D[1], path.G[1], R, 100 - R, 0.5 * FE[1], 20, 25,
    ]
    np.testing.assert_allclose(asm.problem.b, expect)
    assert asm.problem.A.shape == (14, 12)


def test_capacity_row_count_and_rhs():
    path = path_for(5)
    s = State(50.0, path.E[0], path.P[0], path.D[0], path.G[0])
    asm = assemble(Theta.capacity(0.8, 0.1), s, path, 0, HZ, PARAMS)
    h = 8
    assert asm.problem.A.shape[0] == 7 * (h + 1) + h
    b = asm.problem.b
    rooms = [b[i] for i, (tau, k) in enumerate(asm.row_map) if k == "storage_room"]
    assert rooms[0] == PARAMS.R_max - 50
    assert all(r == pytest.approx(0.8 * PARAMS.R_max - 50) for r in rooms[1:])
    assert np.allclose(b[7 * (h + 1):], 50 - 0.1 * PARAMS.R_max)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 24), st.floats(0, 120), st.floats(0, 40))
def test_identity_parameters_reproduce_benchmark(seed, t, R, sigma_f):
    path = path_for(seed, sigma_f)
    s = State(R, path.E[t], path.P[t], path.D[t], path.G[t])
    ref = decide(Theta.benchmark(), s, path, t, HZ, PARAMS).decision
    for th in identity_thetas(8):
        assert decide(th, s, path, t, HZ, PARAMS).decision == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 23), st.floats(0, 120),
       st.sampled_from(["constant", "lookup", "exponential", "capacity"]))
def test_rhs_jacobian_matches_finite_differences(seed, t, R, kind):
    path = path_for(seed)
    s = State(R, path.E[t], path.P[t], path.D[t], path.G[t])
    rng = np.random.default_rng(seed)
    base = Theta.identity(kind, 8)
    theta = base.with_values(rng.uniform(base.lower + 0.1, base.upper - 0.1))
    asm = assemble(theta, s, path, t, HZ, PARAMS)
    h = 1e-5
    for i in range(theta.size):
        v = theta.values.copy()
        v[i] += h
        up = assemble(theta.with_values(v), s, path, t, HZ, PARAMS).problem.b
        v[i] -= 2 * h
        dn = assemble(theta.with_values(v), s, path, t, HZ, PARAMS).problem.b
        np.testing.assert_allclose((up - dn) / (2 * h), asm.rhs_jacobian_theta[:, i], atol=1e-8 * max(1, np.abs(up).max()))
    up = assemble(theta, s._replace(R=R + h), path, t, HZ, PARAMS).problem.b
    dn = assemble(theta, s._replace(R=R - h), path, t, HZ, PARAMS).problem.b
    np.testing.assert_allclose((up - dn) / (2 * h), asm.rhs_jacobian_state, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_lookup_wind_rhs_monotone(seed, tau, lo, hi):
    lo, hi = min(lo, hi), max(lo, hi)
    path = path_for(seed)
    s = State(0.0, path.E[0], path.P[0], path.D[0], path.G[0])
    rhs = []
    for v in (lo, hi):
        vals = np.ones(8)
        vals[tau - 1] = v
        asm = assemble(Theta.lookup(vals), s, path, 0, HZ, PARAMS)
        rhs.append(asm.problem.b[asm.row_map.index((tau, "wind"))])
    assert rhs[0] <= rhs[1]


def test_zero_renewables_zero_storage():
    path = path_for(6, sigma_f=0.0)
    s = State(0.0, 0.0, path.P[0], path.D[0], path.G[0])
    F_E = np.array(path.F_E)
    F_E[0] = np.where(np.isnan(F_E[0]), np.nan, 0.0)
    zero = path.__class__(path.E, path.P, path.D, path.G, F_E, path.F_P, path.seed, path.H)
    x = decide(Theta.benchmark(), s, zero, 0, HZ, PARAMS).decision
    assert x.wd == x.wr == x.rd == x.rg == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 120))
def test_single_period_matches_oracle(seed, R):
    path = path_for(seed, T=4, H=0)
    s = State(R, path.E[2], path.P[2], path.D[2], path.G[2])
    step = decide(Theta.benchmark(), s, path, 2, Horizon(4, 0), PARAMS)
    p = step.assembly.problem
    # the oracle's exact-integer determinant cut does not apply to real data
    status, best = enumerate_lp(p.c, p.A, p.b, det_tol=1e-9)
    assert status == "optimal"
    x = np.asarray(step.decision)
    assert p.c @ x == pytest.approx(best, rel=1e-9, abs=1e-6)


def test_perfect_forecast_reward_equals_omniscient_plan():
    T = 12
    path = path_for(8, sigma_f=0.0, T=T, H=T)
    hz = Horizon(T, T)
    res = simulate(LookaheadPolicy(Theta.benchmark(), hz, PARAMS), path, hz, PARAMS)
    s0 = res.per_period[0][0]
    plan = lp.solve(assemble(Theta.benchmark(), s0, path, 0, hz, PARAMS).problem)
    # contribution = c x - penalty * D, summed over the whole horizon
    assert res.cumulative_reward == pytest.approx(plan.objective - PARAMS.C_penalty * path.D.sum(), rel=1e-9)
    first = np.asarray(res.per_period[0][1])
    c0 = contribution_coefficients(path.P[0], PARAMS.C_penalty, PARAMS.beta_d)
    assert c0 @ first == pytest.approx(c0 @ plan.x[:6])


def test_infeasible_capacity_falls_back_to_grid_serve():
    path = path_for(9)
    s = State(0.0, path.E[0], path.P[0], path.D[0], path.G[0])
    # a reserve of 0.9 R_max cannot be built from an empty store in one charge period
    with pytest.warns(FallbackUsed):
        step = decide(Theta.capacity(1.0, 0.9), s, path, 0, HZ, PARAMS)
    assert step.fallback
    assert step.decision == Decision(gd=min(s.D, s.G))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1))
def test_capacity_decisions_feasible_for_true_state(seed, up, low):
    path = path_for(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FallbackUsed)
        res = simulate(LookaheadPolicy(Theta.capacity(up, low), HZ, PARAMS), path, HZ, PARAMS)
    for s, x, _ in res.per_period:
        check_feasible(s, x, PARAMS)


def test_repair_scales_violating_pair():
    s = State(R=10, E=5, P=0, D=100, G=50)
    x, changed = repair([8, 0, 0, 2, 0, 0], s, PARAMS)
    assert changed
    # wind row wr + wd = 10 > 5 is halved
    assert x.wd == pytest.approx(4) and x.wr == pytest.approx(1)
    check_feasible(s, x, PARAMS)
    y, changed = repair(list(x), s, PARAMS)
    assert not changed and y == x


def test_lookup_too_short_raises():
    path = path_for(1)
    s = State(0.0, path.E[0], path.P[0], path.D[0], path.G[0])
    with pytest.raises(AssemblyError):
        assemble(Theta.lookup([1.0, 1.0]), s, path, 0, HZ, PARAMS)


def test_theta_round_trip_and_boxes():
    th = Theta.exponential(0.7, -0.2)
    assert Theta.from_dict(th.to_dict()).values.tolist() == [0.7, -0.2]
    assert not Theta.capacity(1.0, 0.0).with_values([1.5, 0.0]).inside_box()
    assert Theta.constant(3.0).project().values[0] == 2.0
    with pytest.raises(ValueError):
        Theta.make("nope")
