"""Sample-path gradient of the cumulative reward with respect to theta.

At each period the executed flows are the ``tau = 0`` basic columns of the
lookahead LP, so ``dx/dtheta = Binv (db/dtheta + db/dR * dR/dtheta)`` on
those rows and zero elsewhere.  The period's term values that sensitivity
at the realized price, and the storage transition carries it forward into
``dR/dtheta`` for the next period.

The finite-difference oracle re-simulates whole trajectories on the same
sample path and reports which components crossed a basis change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import (Horizon, StorageParams, TrajectoryResult, contribution_coefficients,
                    simulate, storage_coefficients)
from .policy import Theta, decide

# perturbation used to probe a period's LP for a nearby basis change
KINK_PROBE = 1e-6
# one-sided step for periods whose executed decision was repaired
REPAIR_STEP = 1e-6


@dataclass
class StateSensitivity:
    """``dR_t / dtheta``; zero at ``t = 0`` since the initial state is fixed."""

    dR_dtheta: np.ndarray

    @classmethod
    def zero(cls, p):
        return cls(np.zeros(p))


class GradientEstimate(NamedTuple):
    g: np.ndarray
    per_period_terms: list
    basis_change_flags: list
    # per-component flags, filled by the finite-difference oracle
    component_flags: np.ndarray | None = None


@dataclass
class _Recorder:
    """Policy wrapper that keeps every :class:`PolicyStep` of a rollout."""

    theta: Theta
    horizon: Horizon
    params: StorageParams
    steps: list = field(default_factory=list)

    def __call__(self, s, path, t):
        step = decide(self.theta, s, path, t, self.horizon, self.params)
        self.steps.append(step)
        return step


def rollout(theta: Theta, path, horizon: Horizon, params: StorageParams):
    """Simulate ``theta`` on ``path``; returns the result and the per-period steps."""
    rec = _Recorder(theta, horizon, params)
    result = simulate(rec, path, horizon, params)
    return result, rec.steps


def _basic_tau0(step):
    """Positions in the basis holding executed (``tau = 0``) flow columns."""
    pos, cols = [], []
    for r, j in enumerate(step.solution.basis):
        if j < 6:
            pos.append(r)
            cols.append(j)
    return pos, cols


def period_sensitivity(step, dR):
    """``d x_t / d theta`` (6 x p) of the executed flows for a solved period."""
    asm = step.assembly
    p = asm.rhs_jacobian_theta.shape[1]
    dx = np.zeros((6, p))
    pos, cols = _basic_tau0(step)
    if pos:
        rows = step.solution.basis_inverse[pos]
        dx[cols] = rows @ asm.rhs_jacobian_theta + np.outer(rows @ asm.rhs_jacobian_state, dR)
    return dx


def _one_sided(theta, s, path, t, horizon, params, dR, x0, h=REPAIR_STEP):
    """Forward difference of the executed (repaired) decision for one period."""
    p = theta.size
    dx = np.zeros((6, p))
    for i in range(p):
        v = theta.values.copy()
        v[i] += h
        s_h = s._replace(R=s.R + h * dR[i])
        x_h = np.asarray(decide(theta.with_values(v), s_h, path, t, horizon, params).decision)
        dx[:, i] = (x_h - x0) / h
    return dx


def _basis_moves(theta, s, path, t, horizon, params, dR, base, delta=KINK_PROBE):
    """True if moving any component by ``+-delta`` changes this period's basis."""
    for i in range(theta.size):
        for sign in (1.0, -1.0):
            v = theta.values.copy()
            v[i] += sign * delta
            s_d = s._replace(R=min(max(s.R + sign * delta * dR[i], 0.0), params.R_max))
            sol = decide(theta.with_values(v), s_d, path, t, horizon, params).solution
            if sol is None or frozenset(sol.basis) != base:
                return True
    return False


def trajectory_gradient(theta: Theta, path, horizon: Horizon, params: StorageParams,
                        detect_kinks: bool = False):
    """Exact pathwise gradient of the realized cumulative reward.

    With ``detect_kinks`` each period's LP is re-solved at ``theta +- 1e-6``
    (and the matching storage perturbation) to flag basis changes; this costs
    ``2 p`` extra LP solves per period and is meant for tests.
    """
    p = theta.size
    result, steps = rollout(theta, path, horizon, params)
    sens = StateSensitivity.zero(p)
    beta = storage_coefficients(params.beta_c)
    terms, flags = [], []
    for t, (step, (s, x, _)) in enumerate(zip(steps, result.per_period)):
        flagged = step.fallback or step.repaired
        if step.fallback:
            # grid-serve fallback depends on D and G only
            dx = np.zeros((6, p))
        elif step.repaired:
            dx = _one_sided(theta, s, path, t, horizon, params, sens.dR_dtheta, np.asarray(x))
        else:
            dx = period_sensitivity(step, sens.dR_dtheta)
            if detect_kinks and p:
                flagged = _basis_moves(theta, s, path, t, horizon, params, sens.dR_dtheta,
                                       frozenset(step.solution.basis))
        c = contribution_coefficients(s.P, params.C_penalty, params.beta_d)
        terms.append(c @ dx)
        flags.append(bool(flagged))
        sens = StateSensitivity(sens.dR_dtheta + beta @ dx)
    g = _fsum_rows(terms, p)
    return GradientEstimate(g, terms, flags), result


def _fsum_rows(rows, p):
    return np.array([math.fsum(r[i] for r in rows) for i in range(p)])


def finite_difference_gradient(theta: Theta, path, horizon: Horizon, params: StorageParams,
                               h: float = 1e-4) -> GradientEstimate:
    """Central differences of the cumulative reward on a common sample path.

    ``component_flags[i]`` is set when the trajectory at ``theta +- h e_i``
    visits a different basis than the nominal one in some period, i.e. the
    secant may straddle a kink.  ``basis_change_flags`` marks those periods.
    """
    p = theta.size
    base, base_steps = rollout(theta, path, horizon, params)
    base_bases = [_basis_key(st) for st in base_steps]
    g = np.zeros(p)
    comp = np.zeros(p, dtype=bool)
    period_flags = [False] * len(base_steps)
    terms = []
    for i in range(p):
        vals = []
        for sign in (1.0, -1.0):
            v = theta.values.copy()
            v[i] += sign * h
            res, steps = rollout(theta.with_values(v), path, horizon, params)
            vals.append(res)
            for t, st in enumerate(steps):
                if _basis_key(st) != base_bases[t]:
                    comp[i] = True
                    period_flags[t] = True
        plus, minus = vals
        g[i] = (plus.cumulative_reward - minus.cumulative_reward) / (2.0 * h)
        terms.append([(a[2] - b[2]) / (2.0 * h) for a, b in zip(plus.per_period, minus.per_period)])
    per_period = [np.array([terms[i][t] for i in range(p)]) for t in range(len(base_steps))]
    return GradientEstimate(g, per_period, period_flags, comp)


def _basis_key(step):
    if step.solution is None or not step.solution.is_optimal:
        return None
    return frozenset(step.solution.basis)


def batch_gradient(theta: Theta, paths, horizon: Horizon, params: StorageParams):
    """Mean gradient and mean reward over ``paths`` with compensated summation."""
    gs, rewards = [], []
    for path in paths:
        est, res = trajectory_gradient(theta, path, horizon, params)
        gs.append(est.g)
        rewards.append(res.cumulative_reward)
    n = len(gs)
    g = _fsum_rows(gs, theta.size) / n
    return g, math.fsum(rewards) / n
