"""Dense revised simplex for ``max c^T x  s.t.  A x <= b, x >= 0``.

The solver works on the slack-augmented matrix ``[A | I]`` and keeps an
explicit basis inverse, updated in product form after each pivot and
refactorized every ``REFACTOR_EVERY`` pivots.  Rows with a negative
right-hand side get a temporary artificial column (``-e_i``) and go through
a phase-one problem first; artificials are always driven out of the basis
before phase two, so the reported basis only ever indexes ``[A | I]``.

Pricing is Dantzig's rule (largest reduced cost, lowest column index on
ties).  After ``3 * (m + n)`` consecutive degenerate pivots it switches to
Bland's rule until a non-degenerate pivot occurs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numba import njit

FEAS_TOL = 1e-7
OBJ_TOL = 1e-6
PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
REFACTOR_EVERY = 50
# entries below this are roundoff fill after a refactorization
DROP_TOL = 1e-14

# kernel return codes
_OPTIMAL = 0
_INFEASIBLE = 1
_UNBOUNDED = 2
_BREAKDOWN = 3
_ITER_LIMIT = 4


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class NumericalBreakdown(ArithmeticError):
    """Raised when no pivot element above the pivot tolerance is available."""


def _frozen(a, ndim):
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and not a.flags.writeable:
        arr = a  # already an immutable float array; safe to share
    else:
        arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``max c^T x`` subject to ``A x <= b`` and ``x >= 0``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = _frozen(self.c, 1)
        A = _frozen(self.A, 2)
        b = _frozen(self.b, 1)
        if A.shape != (b.shape[0], c.shape[0]):
            raise ValueError(
                f"A has shape {A.shape}, expected ({b.shape[0]}, {c.shape[0]})"
            )
        # a finite sum implies finite entries; only fall back to the
        # elementwise check when the cheap one fails
        if not np.isfinite(A.sum() + b.sum() + c.sum()):
            if not (np.isfinite(c).all() and np.isfinite(A).all() and np.isfinite(b).all()):
                raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self):
        return self.A.shape


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Result of :func:`solve`.

    ``basis`` lists, in row order of ``basis_inverse``, the basic columns of
    ``[A | I]``: indices below ``n`` are structural, ``n + i`` is the slack
    of row ``i``.  ``diagnostic`` is the offending row (infeasible) or
    entering column (unbounded); it is ``None`` at optimality.
    """

    status: LpStatus
    x: np.ndarray
    objective: float
    basis: tuple
    basis_inverse: np.ndarray
    duals: np.ndarray
    iterations: int = 0
    diagnostic: int | None = None
    basic_values: np.ndarray = field(default=None, repr=False)

    @property
    def is_optimal(self):
        return self.status is LpStatus.OPTIMAL


# ---------------------------------------------------------------------------
# kernel
#
# Binv is stored densely in column-major order.  Alongside it, ``cnz[k, :cnt[k]]``
# lists the rows that may be nonzero in column ``k`` (``inl`` marks
# membership), so products with sparse columns and the eta update only touch
# entries that can be nonzero.  Entries that cancel to zero stay listed.


@njit(cache=True)
def _rebuild_lists(Binv, cnz, cnt, inl):
    m = Binv.shape[0]
    for k in range(m):
        c = 0
        for i in range(m):
            if abs(Binv[i, k]) <= DROP_TOL:
                Binv[i, k] = 0.0
            nzv = Binv[i, k] != 0.0
            inl[k, i] = nzv
            if nzv:
                cnz[k, c] = i
                c += 1
        cnt[k] = c


@njit(cache=True)
def _add_column(r, v, Binv, cnz, cnt, alpha, amark, anz, na):
    for t in range(cnt[r]):
        i = cnz[r, t]
        if not amark[i]:
            amark[i] = True
            anz[na] = i
            na += 1
        alpha[i] += Binv[i, r] * v
    return na


@njit(cache=True)
def _column(j, n, m, colptr, rowidx, vals, Binv, cnz, cnt, alpha, amark, anz):
    """``alpha = Binv a_j`` for a column of ``[A | I | -I]``; returns the
    number of listed rows, sorted ascending in ``anz``.  ``alpha`` and
    ``amark`` must be clear on entry (see :func:`_clear`)."""
    na = 0
    if j < n:
        for kk in range(colptr[j], colptr[j + 1]):
            na = _add_column(rowidx[kk], vals[kk], Binv, cnz, cnt, alpha, amark, anz, na)
    elif j < n + m:
        na = _add_column(j - n, 1.0, Binv, cnz, cnt, alpha, amark, anz, na)
    else:
        na = _add_column(j - n - m, -1.0, Binv, cnz, cnt, alpha, amark, anz, na)
    anz[:na] = np.sort(anz[:na])
    return na


@njit(cache=True)
def _clear(alpha, amark, anz, na):
    for t in range(na):
        i = anz[t]
        alpha[i] = 0.0
        amark[i] = False


@njit(cache=True)
def _pivot(r, alpha, anz, na, Binv, cnz, cnt, inl, xB, step):
    """Product-form update of ``Binv`` and ``xB`` for pivot row ``r``."""
    m = Binv.shape[0]
    piv = alpha[r]
    for k in range(m):
        brk = Binv[r, k]
        if brk == 0.0:
            continue
        brk /= piv
        for t in range(na):
            i = anz[t]
            if i == r:
                continue
            new = Binv[i, k] - alpha[i] * brk
            Binv[i, k] = new
            if new != 0.0 and not inl[k, i]:
                inl[k, i] = True
                cnz[k, cnt[k]] = i
                cnt[k] += 1
        Binv[r, k] = brk
    for t in range(na):
        i = anz[t]
        xB[i] -= step * alpha[i]
    xB[r] = step


@njit(cache=True)
def _invert(M):
    """Gauss-Jordan inverse with partial pivoting that skips zero entries.

    Basis blocks here have a handful of nonzeros per column, so skipping
    zero multipliers and zero pivot-row entries beats a dense LAPACK call.
    Returns an empty array if ``M`` is numerically singular.
    """
    k = M.shape[0]
    W = np.zeros((k, 2 * k))
    for i in range(k):
        for j in range(k):
            W[i, j] = M[i, j]
        W[i, k + i] = 1.0
    nz = np.empty(2 * k, dtype=np.int64)
    for col in range(k):
        r = col
        best = abs(W[col, col])
        for i in range(col + 1, k):
            if abs(W[i, col]) > best:
                best = abs(W[i, col])
                r = i
        if best <= 1e-12:
            return np.empty((0, 0))
        if r != col:
            for j in range(2 * k):
                tmp = W[r, j]
                W[r, j] = W[col, j]
                W[col, j] = tmp
        piv = W[col, col]
        cnt = 0
        for j in range(col, 2 * k):
            if W[col, j] != 0.0:
                W[col, j] /= piv
                nz[cnt] = j
                cnt += 1
        for i in range(k):
            if i == col:
                continue
            f = W[i, col]
            if f == 0.0:
                continue
            for jj in range(cnt):
                j = nz[jj]
                v = W[i, j] - f * W[col, j]
                W[i, j] = v if abs(v) > DROP_TOL else 0.0
            W[i, col] = 0.0
    return W[:, k:].copy()


@njit(cache=True)
def _refactor(A, basis, Binv, colptr, rowidx, vals):
    """Rebuild ``Binv`` from scratch; only the structural block is inverted.

    With the basis permuted to ``[A_J | D]`` where ``D`` holds the unit
    slack/artificial columns, the inverse is block lower-triangular and
    needs just ``inv(A[R, J])`` for the rows ``R`` not covered by ``D``.
    Returns False if that block is singular.
    """
    m, n = A.shape
    sign = np.zeros(m)  # +-1 if row i is covered by a unit column
    unit_pos = np.full(m, -1, dtype=np.int64)
    J = np.empty(m, dtype=np.int64)
    posJ = np.empty(m, dtype=np.int64)
    k = 0
    for p in range(m):
        j = basis[p]
        if j < n:
            J[k] = j
            posJ[k] = p
            k += 1
        elif j < n + m:
            sign[j - n] = 1.0
            unit_pos[j - n] = p
        else:
            sign[j - n - m] = -1.0
            unit_pos[j - n - m] = p
    Rr = np.empty(m, dtype=np.int64)
    nr = 0
    for i in range(m):
        if sign[i] == 0.0:
            Rr[nr] = i
            nr += 1
    if nr != k:
        return False
    Binv[:, :] = 0.0
    if k > 0:
        M = np.empty((k, k))
        for a in range(k):
            for bb in range(k):
                M[a, bb] = A[Rr[a], J[bb]]
        X = _invert(M)
        if X.shape[0] != k:
            return False
        for a in range(k):
            for bb in range(k):
                Binv[posJ[a], Rr[bb]] = X[a, bb]
        # unit rows: -sign_i * A[i, J] X, accumulated over the sparse columns
        for a in range(k):
            j = J[a]
            for kk in range(colptr[j], colptr[j + 1]):
                i = rowidx[kk]
                if sign[i] == 0.0:
                    continue
                p = unit_pos[i]
                v = sign[i] * vals[kk]
                for bb in range(k):
                    Binv[p, Rr[bb]] -= v * X[a, bb]
    for i in range(m):
        if sign[i] != 0.0:
            Binv[unit_pos[i], i] = sign[i]
    return True


@njit(cache=True)
def _recompute(b, cost, basis, Binv, cnz, cnt, xB, y):
    """``xB = Binv b`` and ``y = c_B Binv``."""
    m = Binv.shape[0]
    for i in range(m):
        xB[i] = 0.0
    for k in range(m):
        bk = b[k]
        if bk != 0.0:
            for t in range(cnt[k]):
                i = cnz[k, t]
                xB[i] += Binv[i, k] * bk
    for k in range(m):
        s = 0.0
        for t in range(cnt[k]):
            i = cnz[k, t]
            cb = cost[basis[i]]
            if cb != 0.0:
                s += cb * Binv[i, k]
        y[k] = s


@njit(cache=True)
def _price_all(n, m, cost, y, colptr, rowidx, vals, d):
    """Reduced costs ``c_j - y^T a_j`` of every column of ``[A | I]``."""
    for j in range(n):
        s = cost[j]
        for kk in range(colptr[j], colptr[j + 1]):
            s -= y[rowidx[kk]] * vals[kk]
        d[j] = s
    for i in range(m):
        d[n + i] = cost[n + i] - y[i]


@njit(cache=True)
def _iterate(A, b, cost, basis, in_basis, Binv, cnz, cnt, inl, xB, y,
             colptr, rowidx, vals, rowptr, colidx, rvals,
             opt_tol, piv_tol, feas_tol, refactor_every, max_iter, counters):
    """Run simplex pivots until optimal/unbounded. counters = [iters, since_refactor].

    Reduced costs are kept up to date with the pivot row instead of being
    re-priced from ``y`` each iteration; they are recomputed exactly at
    every refactorization.
    """
    m, n = A.shape
    alpha = np.zeros(m)
    amark = np.zeros(m, dtype=np.bool_)
    anz = np.empty(m, dtype=np.int64)
    d = np.empty(n + m)
    row = np.zeros(n + m)
    touched = np.empty(n + m, dtype=np.int64)
    mark = np.zeros(n + m, dtype=np.bool_)
    _price_all(n, m, cost, y, colptr, rowidx, vals, d)
    degenerate_run = 0
    bland_after = 3 * (m + n)
    while True:
        if counters[0] >= max_iter:
            return _ITER_LIMIT, -1
        bland = degenerate_run >= bland_after
        q = -1
        best = opt_tol
        # artificial columns never re-enter, so only [A | I] is priced
        for j in range(n + m):
            if in_basis[j]:
                continue
            if d[j] > best:
                best = d[j]
                q = j
                if bland:
                    break
        if q < 0:
            return _OPTIMAL, -1
        na = _column(q, n, m, colptr, rowidx, vals, Binv, cnz, cnt, alpha, amark, anz)
        r = -1
        min_ratio = np.inf
        for t in range(na):
            i = anz[t]
            if alpha[i] > piv_tol:
                v = xB[i]
                if v < 0.0:
                    v = 0.0
                ratio = v / alpha[i]
                if r < 0 or ratio < min_ratio - 1e-12 * (1.0 + min_ratio):
                    r = i
                    min_ratio = ratio
                elif bland and ratio <= min_ratio + 1e-12 * (1.0 + min_ratio):
                    if basis[i] < basis[r]:
                        r = i
                        if ratio < min_ratio:
                            min_ratio = ratio
        if r < 0:
            _clear(alpha, amark, anz, na)
            return _UNBOUNDED, q
        if min_ratio <= feas_tol:
            degenerate_run += 1
        else:
            degenerate_run = 0
        leaving = basis[r]
        _pivot(r, alpha, anz, na, Binv, cnz, cnt, inl, xB, min_ratio)
        _clear(alpha, amark, anz, na)
        basis[r] = q
        in_basis[leaving] = False
        in_basis[q] = True
        counters[0] += 1
        counters[1] += 1
        if counters[1] >= refactor_every:
            if not _refactor(A, basis, Binv, colptr, rowidx, vals):
                return _BREAKDOWN, -1
            _rebuild_lists(Binv, cnz, cnt, inl)
            _recompute(b, cost, basis, Binv, cnz, cnt, xB, y)
            _price_all(n, m, cost, y, colptr, rowidx, vals, d)
            counters[1] = 0
            continue
        # pivot row of Binv [A | I] from the updated row r of Binv
        nt = 0
        for k in range(m):
            brk = Binv[r, k]
            if brk == 0.0:
                continue
            y[k] += best * brk
            for kk in range(rowptr[k], rowptr[k + 1]):
                j = colidx[kk]
                if not mark[j]:
                    mark[j] = True
                    touched[nt] = j
                    nt += 1
                row[j] += brk * rvals[kk]
            j = n + k
            if not mark[j]:
                mark[j] = True
                touched[nt] = j
                nt += 1
            row[j] += brk
        for t in range(nt):
            j = touched[t]
            if not in_basis[j]:
                d[j] -= best * row[j]
            row[j] = 0.0
            mark[j] = False
        d[q] = 0.0


@njit(cache=True)
def _solve_kernel(A, b, c, feas_tol, opt_tol, piv_tol, refactor_every, max_iter):
    m, n = A.shape
    N = n + 2 * m
    # compressed rows and columns of A from a single dense scan
    rowptr = np.zeros(m + 1, dtype=np.int64)
    colptr = np.zeros(n + 1, dtype=np.int64)
    colidx = np.empty(m * n, dtype=np.int64)
    rvals = np.empty(m * n)
    nnz = 0
    for i in range(m):
        for j in range(n):
            v = A[i, j]
            if v != 0.0:
                colidx[nnz] = j
                rvals[nnz] = v
                colptr[j + 1] += 1
                nnz += 1
        rowptr[i + 1] = nnz
    for j in range(n):
        colptr[j + 1] += colptr[j]
    rowidx = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    fill = colptr[:n].copy()
    for i in range(m):
        for kk in range(rowptr[i], rowptr[i + 1]):
            j = colidx[kk]
            rowidx[fill[j]] = i
            vals[fill[j]] = rvals[kk]
            fill[j] += 1

    basis = np.empty(m, dtype=np.int64)
    in_basis = np.zeros(N, dtype=np.bool_)
    Binv = np.zeros((m, m)).T  # column-major
    cnz = np.empty((m, m), dtype=np.int64)
    cnt = np.ones(m, dtype=np.int64)
    inl = np.zeros((m, m), dtype=np.bool_)
    xB = np.empty(m)
    y = np.zeros(m)
    counters = np.zeros(2, dtype=np.int64)
    n_art = 0
    for i in range(m):
        cnz[i, 0] = i
        inl[i, i] = True
        if b[i] >= 0.0:
            basis[i] = n + i
            Binv[i, i] = 1.0
            xB[i] = b[i]
        else:
            basis[i] = n + m + i
            Binv[i, i] = -1.0
            xB[i] = -b[i]
            n_art += 1
        in_basis[basis[i]] = True

    cost = np.zeros(N)
    bscale = 1.0
    for i in range(m):
        if abs(b[i]) > bscale:
            bscale = abs(b[i])

    if n_art > 0:
        for i in range(m):
            cost[n + m + i] = -1.0
            if basis[i] >= n + m:
                y[i] = 1.0  # c_B Binv with c_B = -1, Binv = -1
        code, _ = _iterate(A, b, cost, basis, in_basis, Binv, cnz, cnt, inl, xB, y,
                           colptr, rowidx, vals, rowptr, colidx, rvals,
                           opt_tol, piv_tol, feas_tol, refactor_every, max_iter, counters)
        if code != _OPTIMAL:
            return code, -1, basis, Binv, xB, y, counters[0]
        infeas = 0.0
        worst = -1
        for i in range(m):
            if basis[i] >= n + m:
                infeas += xB[i]
                if worst < 0 and xB[i] > feas_tol * bscale:
                    worst = basis[i] - n - m
        if infeas > feas_tol * bscale:
            if worst < 0:
                for i in range(m):
                    if basis[i] >= n + m:
                        worst = basis[i] - n - m
                        break
            return _INFEASIBLE, worst, basis, Binv, xB, y, counters[0]
        # drive remaining (zero-level) artificials out of the basis
        alpha = np.zeros(m)
        amark = np.zeros(m, dtype=np.bool_)
        anz = np.empty(m, dtype=np.int64)
        for r in range(m):
            if basis[r] < n + m:
                continue
            q = -1
            best = piv_tol
            for j in range(n + m):
                if in_basis[j]:
                    continue
                if j < n:
                    v = 0.0
                    for kk in range(colptr[j], colptr[j + 1]):
                        v += Binv[r, rowidx[kk]] * vals[kk]
                else:
                    v = Binv[r, j - n]
                if abs(v) > best:
                    best = abs(v)
                    q = j
            if q < 0:
                return _BREAKDOWN, r, basis, Binv, xB, y, counters[0]
            na = _column(q, n, m, colptr, rowidx, vals, Binv, cnz, cnt, alpha, amark, anz)
            leaving = basis[r]
            _pivot(r, alpha, anz, na, Binv, cnz, cnt, inl, xB, 0.0)
            _clear(alpha, amark, anz, na)
            basis[r] = q
            in_basis[leaving] = False
            in_basis[q] = True
            counters[0] += 1
            counters[1] += 1
        for j in range(n + m, N):
            cost[j] = 0.0
        for j in range(n):
            cost[j] = c[j]
        if not _refactor(A, basis, Binv, colptr, rowidx, vals):
            return _BREAKDOWN, -1, basis, Binv, xB, y, counters[0]
        _rebuild_lists(Binv, cnz, cnt, inl)
        _recompute(b, cost, basis, Binv, cnz, cnt, xB, y)
        counters[1] = 0
    else:
        for j in range(n):
            cost[j] = c[j]

    code, q = _iterate(A, b, cost, basis, in_basis, Binv, cnz, cnt, inl, xB, y,
                       colptr, rowidx, vals, rowptr, colidx, rvals,
                       opt_tol, piv_tol, feas_tol, refactor_every, max_iter, counters)
    if code == _OPTIMAL:
        # polish basic values and duals from the final inverse
        _recompute(b, cost, basis, Binv, cnz, cnt, xB, y)
    return code, q, basis, Binv, xB, y, counters[0]


def solve(p: LpProblem, *, max_iter: int | None = None) -> LpSolution:
    """Solve ``p`` with the dense revised simplex method."""
    m, n = p.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    A = np.ascontiguousarray(p.A)
    code, diag, basis, Binv, xB, y, iters = _solve_kernel(
        A, p.b, p.c, FEAS_TOL, OPT_TOL, PIVOT_TOL, REFACTOR_EVERY, max_iter
    )
    if code == _BREAKDOWN:
        raise NumericalBreakdown(f"no usable pivot in row {diag}")
    if code == _ITER_LIMIT:
        raise NumericalBreakdown(f"iteration limit {max_iter} reached")
    x = np.zeros(n)
    if code == _OPTIMAL:
        structural = basis < n
        x[basis[structural]] = xB[structural]
        status = LpStatus.OPTIMAL
        objective = float(p.c @ x)
        diag = None
    else:
        status = LpStatus.INFEASIBLE if code == _INFEASIBLE else LpStatus.UNBOUNDED
        objective = -np.inf if code == _INFEASIBLE else np.inf
        diag = int(diag)
    for arr in (x, Binv, y, xB):
        arr.setflags(write=False)
    return LpSolution(
        status=status,
        x=x,
        objective=objective,
        basis=tuple(basis.tolist()),
        basis_inverse=Binv,
        duals=y,
        iterations=int(iters),
        diagnostic=diag,
        basic_values=xB,
    )


def basic_value_sensitivity(s: LpSolution) -> np.ndarray:
    """Sensitivity of the basic variables to the right-hand side.

    Row ``r`` is the gradient of the ``r``-th basic variable (in
    ``s.basis`` order) with respect to ``b``; it is ``B^{-1}``.  Nonbasic
    structurals have zero sensitivity.
    """
    if not s.is_optimal:
        raise ValueError("sensitivity is only defined at an optimal basis")
    return s.basis_inverse


def structural_sensitivity(s: LpSolution, n: int) -> np.ndarray:
    """``d x / d b`` as an ``n x m`` matrix (zero rows for nonbasic columns)."""
    Binv = basic_value_sensitivity(s)
    out = np.zeros((n, Binv.shape[0]))
    for r, j in enumerate(s.basis):
        if j < n:
            out[j] = Binv[r]
    return out
