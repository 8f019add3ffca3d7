"""Dense two-phase simplex for small linear programs.

Problems are stated as::

    maximize    c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                lo <= x <= hi

Variable bounds are handled inside the simplex (bounded-variable method),
so box constraints do not add rows.  Pivoting follows Bland's rule:
the entering variable is the lowest-index improving one and ratio-test ties
go to the lowest-index basic variable, which rules out cycling and makes
the result a deterministic function of the input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
PHASE1_TOL = 0.1 * FEAS_TOL  # margin so phase 2 cannot drift past FEAS_TOL
COST_TOL = 1e-11
# Overshoot the ratio test may allow to pick a larger pivot among near-ties.
RATIO_TOL = 1e-12
# Pivots between rebuilding the tableau from the original rows.
REFACTOR_EVERY = 50
# Rebuilds allowed at an apparent optimum before accepting it; round-off can
# otherwise toggle one degenerate pivot back and forth forever.
OPTIMUM_RECHECKS = 3


class LpNumericalError(RuntimeError):
    """The simplex finished but its point misses the constraints (round-off)."""


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


def _matrix(rows, n: int) -> np.ndarray:
    if rows is None:
        return np.zeros((0, n))
    arr = np.array(rows, dtype=float)
    if arr.size == 0:
        return np.zeros((0, n))
    return np.atleast_2d(arr)


@dataclass
class LpProblem:
    """A maximization LP; omitted constraint blocks are empty, bounds default to ``[0, inf)``."""

    c: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    names: Optional[list[str]] = field(default=None, repr=False)

    def __post_init__(self):
        self.c = np.array(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq = _matrix(self.A_eq, n)
        self.A_ub = _matrix(self.A_ub, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.array(self.b_eq, dtype=float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.array(self.b_ub, dtype=float).ravel()
        self.lo = np.zeros(n) if self.lo is None else np.broadcast_to(np.array(self.lo, dtype=float), (n,)).copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.broadcast_to(np.array(self.hi, dtype=float), (n,)).copy()
        if self.A_eq.shape != (self.b_eq.size, n) or self.A_ub.shape != (self.b_ub.size, n):
            raise ValueError("constraint matrix and right-hand side shapes disagree")
        for name in ("c", "A_eq", "b_eq", "A_ub", "b_ub"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)) or np.any(self.lo > self.hi):
            raise ValueError("need lo <= hi for every variable")
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise ValueError("bounds exclude every finite value")

    @property
    def n(self) -> int:
        return self.c.size

    def residual(self, x: np.ndarray) -> float:
        """Largest violation of any constraint or bound at ``x``."""
        worst = 0.0
        if self.b_eq.size:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.b_ub.size:
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub)))
        worst = max(worst, float(np.max(self.lo - x, initial=0.0)), float(np.max(x - self.hi, initial=0.0)))
        return worst


@dataclass
class LpSolution:
    status: LpStatus
    objective: float
    x: Optional[np.ndarray]
    residual: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Bounded-variable simplex on ``A x = b, 0 <= x <= u`` with ``b >= 0``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, u: np.ndarray, n_real: int, max_iter: int,
                 start: np.ndarray):
        m, n = A.shape
        # Rows with start[r] = -1 get a phase-1 artificial (columns n, n+1, ...);
        # the rest start from the identity column given in ``start``.
        need = np.flatnonzero(start < 0)
        art = np.zeros((m, need.size))
        art[need, np.arange(need.size)] = 1.0
        self.A = np.hstack([A, art])
        self.b = b.copy()
        self.tab = self.A.copy()
        self.u = np.concatenate([u, np.full(need.size, np.inf)])
        self.x = np.zeros(n + need.size)
        basis = start.copy()
        basis[need] = n + np.arange(need.size)
        self.basis = [int(k) for k in basis]
        self.x[basis] = b
        self.is_basic = np.zeros(n + need.size, dtype=bool)
        self.is_basic[basis] = True
        self.n = n
        self.n_real = n_real
        self.n_art = need.size
        self.iterations = 0
        self.max_iter = max_iter
        self.stale = 0

    def run(self, cost: np.ndarray) -> bool:
        """Maximize ``cost @ x`` from the current basis; False if unbounded."""
        tab, u, x = self.tab, self.u, self.x
        rechecks = 0
        while True:
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise RuntimeError("simplex iteration limit exceeded")
            cb = cost[self.basis]
            reduced = cost - cb @ tab
            entering = -1
            for j in np.flatnonzero(np.abs(reduced) > COST_TOL):
                if self.is_basic[j] or u[j] == 0.0:
                    continue
                at_upper = u[j] < np.inf and x[j] >= u[j]
                if (reduced[j] > 0 and not at_upper) or (reduced[j] < 0 and x[j] > 0.0):
                    entering = j
                    break
            if entering < 0:
                if self.stale and rechecks < OPTIMUM_RECHECKS and self._refactor():
                    rechecks += 1
                    continue
                return True
            j = entering
            direction = 1.0 if reduced[j] > 0 else -1.0
            col = tab[:, j] * direction

            # Two-pass ratio test: find the longest step allowed when every basic
            # variable may overshoot its bound by RATIO_TOL, then, among rows that
            # block within that step, pivot on the largest entry.  Large pivots
            # keep the basis well conditioned.  The bound flip of the entering
            # variable counts as index j.
            basis = np.asarray(self.basis)
            xb, ub = x[basis], u[basis]
            tol = PIVOT_TOL * max(1.0, float(np.max(np.abs(col))))
            down = col > tol
            up = (col < -tol) & np.isfinite(ub)
            limits = np.full(basis.size, np.inf)
            relaxed = np.full(basis.size, np.inf)
            limits[down] = xb[down] / col[down]
            limits[up] = (ub[up] - xb[up]) / -col[up]
            relaxed[down] = (xb[down] + RATIO_TOL) / col[down]
            relaxed[up] = (ub[up] - xb[up] + RATIO_TOL) / -col[up]
            np.maximum(limits, 0.0, out=limits)
            step = u[j]
            leave_row, leave_var = -1, j
            cap = max(relaxed.min(), 0.0) if relaxed.size else np.inf
            if cap < step:
                rows = np.flatnonzero(limits <= cap)
                mag = np.abs(col[rows])
                best = rows[mag >= mag.max() * (1.0 - 1e-12)]
                r = int(best[np.argmin(basis[best])])
                step, leave_row, leave_var = limits[r], r, int(basis[r])
            if step == np.inf:
                return False

            x[j] += direction * step
            x[basis] -= col * step
            if leave_row < 0:
                x[j] = u[j] if direction > 0 else 0.0
                continue
            k = self.basis[leave_row]
            x[k] = 0.0 if col[leave_row] > 0 else u[k]
            self._pivot(leave_row, j)
            if self.stale >= REFACTOR_EVERY:
                self._refactor()

    def _pivot(self, r: int, j: int) -> None:
        tab = self.tab
        tab[r] /= tab[r, j]
        factors = tab[:, j].copy()
        factors[r] = 0.0
        tab -= factors[:, None] * tab[r]
        self.is_basic[self.basis[r]] = False
        self.basis[r] = j
        self.is_basic[j] = True
        self.stale += 1

    def _refactor(self) -> bool:
        """Recompute the tableau and basic values from the original rows.

        Long runs of pivots accumulate round-off in the dense tableau.
        Returns False (leaving the tableau as is) if the basis matrix is
        numerically singular.
        """
        basis = np.asarray(self.basis)
        try:
            tab = np.linalg.solve(self.A[:, basis], self.A)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(tab)):
            return False
        nonbasic = ~self.is_basic
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.tab[...] = tab
        self.x[basis] = np.linalg.solve(self.A[:, basis], rhs)
        self.stale = 0
        return True

    def retire_artificials(self) -> None:
        """Pin artificials at zero and pivot them out of the basis where possible."""
        self.u[self.n:] = 0.0
        for r, k in enumerate(list(self.basis)):
            if k < self.n:
                continue
            row = self.tab[r, :self.n]
            mag = np.where(self.is_basic[:self.n], 0.0, np.abs(row))
            best = int(np.argmax(mag)) if mag.size else 0
            if mag.size and mag[best] > PIVOT_TOL:
                self._pivot(r, best)


def solve_lp(problem: LpProblem, max_iter: Optional[int] = None) -> LpSolution:
    """Optimal basic solution, or an Infeasible / Unbounded status."""
    p = problem
    n = p.n

    # Map each original variable to non-negative columns: x = lo + y, x = hi - y,
    # or x = y+ - y- when unbounded on both sides.
    cols = []
    offset = np.zeros(n)
    for v in range(n):
        if np.isfinite(p.lo[v]):
            cols.append((v, 1.0, p.hi[v] - p.lo[v]))
            offset[v] = p.lo[v]
        elif np.isfinite(p.hi[v]):
            cols.append((v, -1.0, np.inf))
            offset[v] = p.hi[v]
        else:
            cols.append((v, 1.0, np.inf))
            cols.append((v, -1.0, np.inf))
    T = np.zeros((n, len(cols)))
    for k, (v, sign, _) in enumerate(cols):
        T[v, k] = sign
    u_struct = np.array([ub for _, _, ub in cols], dtype=float)

    m_eq, m_ub = p.b_eq.size, p.b_ub.size
    A = np.zeros((m_eq + m_ub, len(cols) + m_ub))
    A[:m_eq, :len(cols)] = p.A_eq @ T
    A[m_eq:, :len(cols)] = p.A_ub @ T
    A[m_eq:, len(cols):] = np.eye(m_ub)
    b = np.concatenate([p.b_eq - p.A_eq @ offset, p.b_ub - p.A_ub @ offset])
    u = np.concatenate([u_struct, np.full(m_ub, np.inf)])
    cost = np.concatenate([p.c @ T, np.zeros(m_ub)])

    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    m, n_std = A.shape
    if max_iter is None:
        max_iter = 50 * (m + n_std) + 1000

    def to_original(y):
        return offset + T @ y[:len(cols)]

    if m == 0:
        # Only bounds: each column goes to whichever end its cost prefers.
        if np.any((cost > 0) & ~np.isfinite(u)):
            return LpSolution(LpStatus.UNBOUNDED, np.inf, None, 0.0)
        y = np.where(cost > 0, u, 0.0)
        x = to_original(y)
        return LpSolution(LpStatus.OPTIMAL, float(p.c @ x), x, p.residual(x))

    # Work on an equilibrated copy; slack columns keep unit entries so
    # inequality rows that kept their sign can start from their own slack.
    row_scale, col_scale = _equilibrate(A, len(cols), m_eq)
    A = A * row_scale[:, None] * col_scale
    b_raw = b
    b = b * row_scale
    u = u / col_scale
    cost = cost * col_scale
    start = np.full(m, -1)
    start[m_eq:] = len(cols) + np.arange(m_ub)
    start[flip] = -1
    tab = _Tableau(A, b, u, len(cols), max_iter, start)
    phase1 = np.concatenate([np.zeros(n_std), -np.ones(tab.n_art)])
    tab.run(phase1)
    # Judge the phase-1 point as the final check will: clipped to its
    # bounds and measured in the caller's row units.  Harris steps can hide
    # a tiny infeasibility in slightly negative basics instead of artificials.
    y1 = np.clip(tab.x[:n_std], 0.0, tab.u[:n_std])
    infeasibility = float(np.max(np.abs(A @ y1 - b) / row_scale))
    if infeasibility > PHASE1_TOL * max(1.0, float(np.max(np.abs(b_raw)))):
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), None, infeasibility, tab.iterations)
    tab.retire_artificials()

    full_cost = np.concatenate([cost, np.zeros(tab.n_art)])
    if not tab.run(full_cost):
        return LpSolution(LpStatus.UNBOUNDED, np.inf, None, 0.0, tab.iterations)

    y = _refine(A, b, tab) * col_scale
    x = to_original(y)
    residual = p.residual(x)
    if residual > FEAS_TOL * max(1.0, float(np.max(np.abs(p.b_eq), initial=0.0)),
                                 float(np.max(np.abs(p.b_ub), initial=0.0))):
        raise LpNumericalError(f"simplex point violates the constraints by {residual:.3g}")
    return LpSolution(LpStatus.OPTIMAL, float(p.c @ x), x, residual, tab.iterations)


def _equilibrate(A: np.ndarray, n_struct: int, m_eq: int, passes: int = 8):
    """Row and column scale factors (powers of two) that bring entries toward 1.

    Alternating geometric-mean passes over the structural columns; slack
    column ``k`` of inequality row ``r`` gets ``1 / row_scale[r]`` so it
    stays a unit column.  Powers of two keep the scaling exact.
    """
    m = A.shape[0]
    mag = np.abs(A[:, :n_struct])
    nz = mag > 0
    row = np.ones(m)
    col = np.ones(n_struct)
    with np.errstate(divide="ignore"):
        logmag = np.where(nz, np.log2(np.where(nz, mag, 1.0)), 0.0)
    for _ in range(passes):
        scaled = logmag + np.log2(row)[:, None] + np.log2(col)[None, :]
        hi = np.where(nz, scaled, -np.inf).max(axis=1)
        lo = np.where(nz, scaled, np.inf).min(axis=1)
        has = np.isfinite(hi)
        row[has] *= np.exp2(-np.round((hi[has] + lo[has]) / 2))
        scaled = logmag + np.log2(row)[:, None] + np.log2(col)[None, :]
        hi = np.where(nz, scaled, -np.inf).max(axis=0)
        lo = np.where(nz, scaled, np.inf).min(axis=0)
        has = np.isfinite(hi)
        col[has] *= np.exp2(-np.round((hi[has] + lo[has]) / 2))
    slack = 1.0 / row[m_eq:]
    return row, np.concatenate([col, slack])


def _refine(A: np.ndarray, b: np.ndarray, tab: _Tableau) -> np.ndarray:
    """Recompute basic values from the original rows to shed pivoting round-off."""
    n_std = A.shape[1]
    y = tab.x[:n_std].copy()
    real_basis = [r for r, k in enumerate(tab.basis) if k < n_std]
    if len(real_basis) != len(tab.basis):
        # Redundant rows keep a zero artificial in the basis; leave values as pivoted.
        return np.clip(y, 0.0, tab.u[:n_std])
    pivoted = np.clip(y, 0.0, tab.u[:n_std])
    B = A[:, tab.basis]
    nonbasic = ~tab.is_basic[:n_std]
    rhs = b - A[:, nonbasic] @ y[nonbasic]
    try:
        y[tab.basis] = np.linalg.solve(B, rhs)
    except np.linalg.LinAlgError:
        return pivoted
    y = np.clip(y, 0.0, tab.u[:n_std])
    # Near-degenerate bases can solve to slightly negative values whose
    # clipping costs more than the round-off being removed.
    if np.max(np.abs(A @ y - b)) > np.max(np.abs(A @ pivoted - b)):
        return pivoted
    return y
