"""Deterministic lookahead policy and its parametric right-hand-side variants.

At period ``t`` the lookahead LP plans flows for offsets ``tau = 0..h``
(``h = min(H, T - t)``) using the rolling forecasts made at ``t``.  The
storage level inside the lookahead is substituted out: the planned level at
offset ``tau`` is ``R_t`` plus the net flows of earlier offsets, so those
flows appear as coupling entries in the storage rows of later offsets and
every offset keeps exactly seven rows.

Parameterizations act on offsets ``tau >= 1`` only; the ``tau = 0`` rows
use the true state, which keeps executed decisions feasible.

* ``constant``     wind row rhs ``F^E * theta``
* ``lookup``       wind row rhs ``F^E * theta[tau - 1]``
* ``exponential``  wind row rhs ``F^E * theta1 * exp(theta2 * tau)``
* ``capacity``     storage-room rhs ``R_max * theta_U - R_t`` and one extra
                   reserve row per offset, ``stored - discharged >= R_max * theta_L``
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import lp
from .model import (FEAS_TOL, GD, GR, RD, RG, WD, WR, Decision, Horizon, State,
                    StorageParams, row_values)

KINDS = ("benchmark", "constant", "lookup", "exponential", "capacity")
ROW_KINDS = ("demand", "grid", "storage_out", "storage_room", "wind", "charge", "discharge")

_BOXES = {
    "benchmark": ((), ()),
    "constant": ((0.0,), (2.0,)),
    "exponential": ((0.0, -1.0), (2.0, 0.1)),
    "capacity": ((0.0, 0.0), (1.0, 1.0)),
}
LOOKUP_BOX = (0.0, 2.0)


class AssemblyError(ValueError):
    pass


class FallbackUsed(RuntimeWarning):
    """The lookahead LP was infeasible and the grid-serve fallback was executed."""


@dataclass(frozen=True, eq=False)
class Theta:
    """A parameterization variant with its flat parameter vector and box.

    Capacity parameters are ordered ``(theta_U, theta_L)``, exponential ones
    ``(theta1, theta2)``.
    """

    kind: str
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown variant {self.kind!r}")
        for name in ("values", "lower", "upper"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (len(self.values) == len(self.lower) == len(self.upper)):
            raise ValueError("values and box bounds must have the same length")
        if self.kind == "lookup" and len(self.values) == 0:
            raise ValueError("lookup needs at least one parameter")

    @classmethod
    def make(cls, kind, values=None, H=None):
        if kind not in KINDS:
            raise ValueError(f"unknown variant {kind!r}")
        if kind == "lookup":
            if values is None:
                values = np.ones(H)
            k = len(np.atleast_1d(values))
            return cls(kind, values, np.full(k, LOOKUP_BOX[0]), np.full(k, LOOKUP_BOX[1]))
        lo, hi = _BOXES[kind]
        if values is None:
            values = IDENTITY[kind]
        return cls(kind, values, lo, hi)

    @classmethod
    def identity(cls, kind, H=None):
        """Parameters under which the variant reproduces the benchmark."""
        return cls.make(kind, None, H)

    @classmethod
    def benchmark(cls):
        return cls.make("benchmark")

    @classmethod
    def constant(cls, value=1.0):
        return cls.make("constant", [value])

    @classmethod
    def lookup(cls, values):
        return cls.make("lookup", values)

    @classmethod
    def exponential(cls, scale=1.0, rate=0.0):
        return cls.make("exponential", [scale, rate])

    @classmethod
    def capacity(cls, upper=1.0, lower=0.0):
        return cls.make("capacity", [upper, lower])

    @property
    def size(self):
        return len(self.values)

    def with_values(self, values):
        return Theta(self.kind, values, self.lower, self.upper)

    def project(self):
        return self.with_values(np.clip(self.values, self.lower, self.upper))

    def inside_box(self, tol=0.0):
        return bool(np.all(self.values >= self.lower - tol) and np.all(self.values <= self.upper + tol))

    def to_dict(self):
        return {"variant": self.kind, "theta": [float(v) for v in self.values]}

    @classmethod
    def from_dict(cls, d):
        return cls.make(d["variant"], d["theta"] if d["variant"] != "benchmark" else None)

    def forecast_curve(self, h):
        """Multiplier applied to the renewable forecast at offsets ``0..h``."""
        return self.wind_multipliers(h)[0]

    def wind_multipliers(self, h):
        """Wind-row multipliers for offsets ``0..h`` and their theta-Jacobian."""
        mult = np.ones(h + 1)
        jac = np.zeros((h + 1, self.size))
        v = self.values
        if h == 0:
            return mult, jac
        if self.kind == "constant":
            mult[1:] = v[0]
            jac[1:, 0] = 1.0
        elif self.kind == "lookup":
            if len(v) < h:
                raise AssemblyError(f"lookup has {len(v)} parameters, lookahead needs {h}")
            mult[1:] = v[:h]
            jac[np.arange(1, h + 1), np.arange(h)] = 1.0
        elif self.kind == "exponential":
            tau = np.arange(1, h + 1, dtype=float)
            e = np.exp(v[1] * tau)
            mult[1:] = v[0] * e
            jac[1:, 0] = e
            jac[1:, 1] = v[0] * tau * e
        return mult, jac


IDENTITY = {
    "benchmark": (),
    "constant": (1.0,),
    "exponential": (1.0, 0.0),
    "capacity": (1.0, 0.0),
}


class LookaheadAssembly(NamedTuple):
    problem: lp.LpProblem
    row_map: tuple
    col_map: tuple
    rhs_jacobian_theta: np.ndarray
    rhs_jacobian_state: np.ndarray


class PolicyStep(NamedTuple):
    decision: Decision
    solution: lp.LpSolution | None
    assembly: LookaheadAssembly
    fallback: bool = False
    repaired: bool = False


@lru_cache(maxsize=512)
def _structure(h, beta_c, beta_d, reserve):
    """Constraint matrix and row/column maps for an ``h``-offset lookahead."""
    nper = h + 1
    n = 6 * nper
    m = 7 * nper + (h if reserve else 0)
    A = np.zeros((m, n))
    for tau in range(nper):
        r, c = 7 * tau, 6 * tau
        A[r, [c + WD, c + GD]] = 1.0
        A[r, c + RD] = beta_d
        A[r + 1, [c + GD, c + GR]] = 1.0
        A[r + 2, [c + RD, c + RG]] = 1.0
        A[r + 3, [c + WR, c + GR]] = 1.0
        A[r + 4, [c + WR, c + WD]] = 1.0
        A[r + 5, [c + WR, c + GR]] = 1.0
        A[r + 6, [c + RD, c + RG]] = 1.0
        for k in range(tau):
            ck = 6 * k
            A[r + 2, [ck + RD, ck + RG]] = 1.0
            A[r + 2, [ck + WR, ck + GR]] = -beta_c
            A[r + 3, [ck + RD, ck + RG]] = -1.0
            A[r + 3, [ck + WR, ck + GR]] = beta_c
    rows = [(tau, kind) for tau in range(nper) for kind in ROW_KINDS]
    if reserve:
        for tau in range(1, nper):
            A[7 * nper + tau - 1] = A[7 * tau + 2]
            rows.append((tau, "reserve"))
    cols = tuple((tau, f) for tau in range(nper) for f in ("wd", "gd", "rd", "wr", "gr", "rg"))
    A.setflags(write=False)
    return A, tuple(rows), cols


def assemble(theta: Theta, s: State, path, t: int, horizon: Horizon,
             params: StorageParams) -> LookaheadAssembly:
    """Build the lookahead LP at period ``t`` for parameters ``theta``."""
    h = horizon.lookahead(t)
    if h < 0 or t + h > path.T:
        raise AssemblyError(f"period {t} with lookahead {h} exceeds path length {path.T}")
    reserve = theta.kind == "capacity"
    A, rows, cols = _structure(h, params.beta_c, params.beta_d, reserve)
    per = slice(t, t + h + 1)
    price = path.F_P[t, per]
    wind = path.F_E[t, per]
    if len(price) != h + 1 or np.isnan(price).any() or np.isnan(wind).any():
        raise AssemblyError(f"forecasts at origin {t} do not cover offsets 0..{h}")
    D = path.D[per]
    G = path.G[per]
    nper = h + 1
    p = theta.size
    R, Rmax, pen, bd = s.R, params.R_max, params.C_penalty, params.beta_d

    mult, dmult = theta.wind_multipliers(h)
    room = np.full(nper, Rmax - R)
    B = np.empty((nper, 7))
    B[:, 0] = D
    B[:, 1] = G
    B[:, 2] = R
    B[:, 4] = wind * mult
    B[:, 5] = params.gamma_c
    B[:, 6] = params.gamma_d
    jac = np.zeros((nper, 7, p))
    jac[:, 4, :] = wind[:, None] * dmult
    dstate = np.zeros((nper, 7))
    dstate[:, 2] = 1.0
    dstate[:, 3] = -1.0
    if reserve:
        theta_u, theta_l = theta.values
        room[1:] = Rmax * theta_u - R
        jac[1:, 3, 0] = Rmax
    B[:, 3] = room
    b = B.reshape(-1)
    jac_theta = jac.reshape(7 * nper, p)
    jac_state = dstate.reshape(-1)
    if reserve:
        b = np.concatenate([b, np.full(h, R - Rmax * theta_l)])
        extra = np.zeros((h, p))
        extra[:, 1] = -Rmax
        jac_theta = np.vstack([jac_theta, extra])
        jac_state = np.concatenate([jac_state, np.ones(h)])

    C = np.empty((nper, 6))
    C[:, WD] = price + pen
    C[:, GD] = pen
    C[:, RD] = bd * (price + pen)
    C[:, WR] = 0.0
    C[:, GR] = -price
    C[:, RG] = bd * price
    c = C.reshape(-1)
    jac_theta.setflags(write=False)
    jac_state.setflags(write=False)
    return LookaheadAssembly(lp.LpProblem(c, A, b), rows, cols, jac_theta, jac_state)


def fallback_decision(s: State) -> Decision:
    """Serve as much demand as possible from the grid, do nothing else."""
    return Decision(gd=max(0.0, min(s.D, s.G)))


# flows appearing in each of the seven rows, in row order
_ROW_FLOWS = ((WD, GD, RD), (GD, GR), (RD, RG), (WR, GR), (WR, WD), (WR, GR), (RD, RG))


def repair(x, s: State, params: StorageParams, tol=1e-9):
    """Scale flows down until ``x`` satisfies the true-state rows.

    Returns ``(Decision, changed)``.  All row coefficients are
    non-negative, so one ordered pass suffices.
    """
    x = [max(float(v), 0.0) for v in x]
    changed = False
    for i, flows in enumerate(_ROW_FLOWS):
        lhs, rhs = row_values(s, x, params)
        if lhs[i] > rhs[i] + tol * (1.0 + abs(rhs[i])):
            scale = max(rhs[i], 0.0) / lhs[i]
            for j in flows:
                x[j] *= scale
            changed = True
    return Decision(*x), changed


def decide(theta: Theta, s: State, path, t: int, horizon: Horizon,
           params: StorageParams) -> PolicyStep:
    """Solve the lookahead LP and return the executed ``tau = 0`` decision."""
    asm = assemble(theta, s, path, t, horizon, params)
    sol = lp.solve(asm.problem)
    if not sol.is_optimal:
        warnings.warn(f"lookahead LP {sol.status.value} at t={t}; grid-serve fallback", FallbackUsed, stacklevel=2)
        return PolicyStep(fallback_decision(s), sol, asm, fallback=True)
    clipped = [max(v, 0.0) for v in sol.x[:6].tolist()]
    x, changed = repair(clipped, s, params)
    # clipping rounding noise is not a repair
    changed = changed and max(abs(a - b) for a, b in zip(x, clipped)) > FEAS_TOL
    return PolicyStep(x, sol, asm, repaired=bool(changed))


class LookaheadPolicy:
    """Callable policy ``(state, path, t) -> Decision`` for a fixed theta."""

    def __init__(self, theta: Theta, horizon: Horizon, params: StorageParams):
        self.theta = theta
        self.horizon = horizon
        self.params = params

    def decide(self, s, path, t):
        return decide(self.theta, s, path, t, self.horizon, self.params)

    def __call__(self, s, path, t):
        return self.decide(s, path, t).decision
