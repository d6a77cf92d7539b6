"""Sequential decision model for the storage problem.

State ``(R, E, P, D, G)``, a six-flow decision, the linear contribution,
the storage transition, and a simulator that rolls any policy along a
:class:`~cfa.energy.SamplePath`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

FEAS_TOL = 1e-7

FLOWS = ("wd", "gd", "rd", "wr", "gr", "rg")
WD, GD, RD, WR, GR, RG = range(6)
ROW_KINDS = ("demand", "grid", "storage_out", "storage_room", "wind", "charge", "discharge")


class InfeasibleDecision(ValueError):
    """A decision violates one of the seven constraint rows of its state."""

    def __init__(self, constraint, excess):
        super().__init__(f"constraint '{constraint}' violated by {excess:.3g}")
        self.constraint = constraint
        self.excess = excess


@dataclass(frozen=True)
class StorageParams:
    """Physical parameters of the storage device and the demand penalty.

    The default ``C_penalty`` is ``10 * P_max`` for the default price model.
    """

    R_max: float = 120.0
    gamma_c: float = 30.0
    gamma_d: float = 30.0
    beta_c: float = 0.9
    beta_d: float = 0.9
    C_penalty: float = 700.0
    R0: float = 0.0

    def __post_init__(self):
        if min(self.R_max, self.gamma_c, self.gamma_d, self.C_penalty) <= 0:
            raise ValueError("R_max, gamma_c, gamma_d and C_penalty must be positive")
        if not (0 < self.beta_c < 1 and 0 < self.beta_d < 1):
            raise ValueError("efficiencies must lie in (0, 1)")
        if not 0 <= self.R0 <= self.R_max:
            raise ValueError("R0 must lie in [0, R_max]")


class State(NamedTuple):
    R: float
    E: float
    P: float
    D: float
    G: float


class Decision(NamedTuple):
    wd: float = 0.0
    gd: float = 0.0
    rd: float = 0.0
    wr: float = 0.0
    gr: float = 0.0
    rg: float = 0.0

    @classmethod
    def from_array(cls, x):
        return cls(*(float(v) for v in x))

    def as_array(self):
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class Horizon:
    T: int
    H: int

    def __post_init__(self):
        if self.T < 0 or self.H < 0:
            raise ValueError("T and H must be non-negative")

    def lookahead(self, t):
        """Truncated lookahead length ``min(H, T - t)``."""
        return min(self.H, self.T - t)


class TrajectoryResult(NamedTuple):
    cumulative_reward: float
    per_period: list
    storage_series: np.ndarray
    final_storage: float


def constraint_rows(s: State, params: StorageParams):
    """The seven rows ``G x <= h`` that a decision must satisfy in state ``s``."""
    bd = params.beta_d
    G = np.array([
        [1, 1, bd, 0, 0, 0],   # demand
        [0, 1, 0, 0, 1, 0],    # grid
        [0, 0, 1, 0, 0, 1],    # storage out
        [0, 0, 0, 1, 1, 0],    # storage room
        [1, 0, 0, 1, 0, 0],    # wind
        [0, 0, 0, 1, 1, 0],    # charge cap
        [0, 0, 1, 0, 0, 1],    # discharge cap
    ], dtype=float)
    h = np.array([s.D, s.G, s.R, params.R_max - s.R, s.E, params.gamma_c, params.gamma_d])
    return G, h


def row_values(s: State, x, params: StorageParams):
    """Left- and right-hand sides of the seven rows as plain floats."""
    wd, gd, rd, wr, gr, rg = (float(v) for v in x)
    lhs = (wd + gd + params.beta_d * rd, gd + gr, rd + rg, wr + gr, wr + wd, wr + gr, rd + rg)
    rhs = (s.D, s.G, s.R, params.R_max - s.R, s.E, params.gamma_c, params.gamma_d)
    return lhs, rhs


def check_feasible(s: State, x: Decision, params: StorageParams, tol=FEAS_TOL):
    for j, v in enumerate(x):
        if v < -tol:
            raise InfeasibleDecision(f"x_{FLOWS[j]} >= 0", float(-v))
    lhs, rhs = row_values(s, x, params)
    for i in range(7):
        excess = lhs[i] - rhs[i]
        if excess > tol * (1.0 + abs(rhs[i])):
            raise InfeasibleDecision(ROW_KINDS[i], float(excess))


def contribution_coefficients(price, penalty, beta_d):
    """Per-flow coefficients of the contribution (without the ``-penalty*D`` constant)."""
    return np.array([
        price + penalty,
        penalty,
        beta_d * (price + penalty),
        0.0,
        -price,
        beta_d * price,
    ])


def contribution(s: State, x: Decision, penalty: float, beta_d: float) -> float:
    served = x.wd + beta_d * x.rd + x.gd
    revenue = s.P * (x.wd + beta_d * x.rd + x.gd + beta_d * x.rg - x.gr - x.gd)
    return revenue - penalty * (s.D - served)


def storage_coefficients(beta_c):
    """Change of the storage level per unit of each flow."""
    return np.array([0.0, 0.0, -1.0, beta_c, beta_c, -1.0])


def transition(s: State, x: Decision, w_next, params: StorageParams) -> State:
    """Advance the storage level and load the next exogenous values.

    ``w_next`` is ``(E, P, D, G)`` for the next period.
    """
    check_feasible(s, x, params)
    R = s.R - x.rd + params.beta_c * x.wr + params.beta_c * x.gr - x.rg
    # no clamping: feasible flows keep R in [0, R_max] up to rounding
    assert -1e-6 <= R <= params.R_max + 1e-6, R
    E, P, D, G = w_next
    return State(R, float(E), float(P), float(D), float(G))


def initial_state(path, params: StorageParams) -> State:
    return State(params.R0, float(path.E[0]), float(path.P[0]), float(path.D[0]), float(path.G[0]))


def exogenous(path, t):
    return path.E[t], path.P[t], path.D[t], path.G[t]


def simulate(policy: Callable, path, horizon: Horizon, params: StorageParams) -> TrajectoryResult:
    """Roll ``policy(state, path, t) -> Decision`` over periods ``0..T``."""
    T = horizon.T
    if path.T < T:
        raise ValueError(f"sample path covers {path.T} periods, need {T}")
    s = initial_state(path, params)
    rows = []
    rewards = []
    storage = np.empty(T + 1)
    for t in range(T + 1):
        x = policy(s, path, t)
        if not isinstance(x, Decision):
            x = x.decision
        c = contribution(s, x, params.C_penalty, params.beta_d)
        rows.append((s, x, c))
        rewards.append(c)
        storage[t] = s.R
        w = exogenous(path, t + 1) if t < T else (0.0, 0.0, 0.0, 0.0)
        s = transition(s, x, w, params)
    storage.setflags(write=False)
    return TrajectoryResult(math.fsum(rewards), rows, storage, s.R)


def do_nothing(state, path, t):
    return Decision()
