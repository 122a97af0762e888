"""Dense bounded-variable primal simplex with Bland's rule.

Small and deterministic rather than fast: the envelope LPs have one thermal
row and one voltage row per node, so a dense tableau is adequate up to a few
thousand nodes. Rows are equilibrated and the objective is normalised before
pivoting; reported duals and objective are in the caller's units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LpProblem", "LpSolution", "solve_simplex"]

_TOL = 1e-9


@dataclass(frozen=True)
class LpProblem:
    """``max/min c @ x`` s.t. ``A[i] @ x (<= or >=) b[i]`` and ``lower <= x <= upper``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = True
    row_names: tuple[str, ...] = ()
    var_names: tuple[str, ...] = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = len(np.asarray(self.c).reshape(-1))
        if A.size == 0:
            A = A.reshape(0, n)
        object.__setattr__(self, "A", A)
        for name in ("c", "b", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        object.__setattr__(self, "senses", tuple(self.senses))
        m = A.shape[0]
        if A.shape[1] != n or len(self.b) != m or len(self.senses) != m:
            raise ValueError("inconsistent LP dimensions")
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("bounds must have one entry per variable")
        if any(s not in ("<=", ">=") for s in self.senses):
            raise ValueError("row senses must be '<=' or '>='")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise ValueError("LP data must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("a variable has lower > upper")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def permuted(self, perm) -> "LpProblem":
        """Same problem with variables reordered as ``perm``."""
        perm = np.asarray(perm)
        return LpProblem(
            c=self.c[perm],
            A=self.A[:, perm],
            b=self.b,
            senses=self.senses,
            lower=self.lower[perm],
            upper=self.upper[perm],
            maximize=self.maximize,
            row_names=self.row_names,
            var_names=tuple(np.asarray(self.var_names)[perm]) if self.var_names else (),
        )


@dataclass(frozen=True)
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    active: np.ndarray
    duals: np.ndarray
    degenerate: bool
    iterations: int
    basis: tuple[int, ...] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    def __init__(self, T, beta, basis, ub, nstruct):
        self.T = T
        self.beta = beta
        self.basis = basis
        self.ub = ub
        self.ntot = T.shape[1]
        self.is_basic = np.zeros(self.ntot, dtype=bool)
        self.is_basic[basis] = True
        self.at_upper = np.zeros(self.ntot, dtype=bool)
        self.nstruct = nstruct
        self.iterations = 0

    def reduced_costs(self, cost):
        return cost - cost[self.basis] @ self.T

    def pivot(self, r, j):
        T = self.T
        row = T[r] / T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, row)
        T[r] = row

    def run(self, cost, max_iter):
        """Primal simplex from the current basic feasible solution; returns a status."""
        d = self.reduced_costs(cost)
        while True:
            if self.iterations >= max_iter:
                return "iteration_limit"
            movable_up = (~self.at_upper) & (self.ub > _TOL)
            cand = np.flatnonzero(~self.is_basic & ((movable_up & (d > _TOL)) | (self.at_upper & (d < -_TOL))))
            if cand.size == 0:
                return "optimal"
            self.iterations += 1
            j = int(cand[0])
            step = -1.0 if self.at_upper[j] else 1.0
            col = self.T[:, j] * step
            t_best = self.ub[j]
            leave = -1
            leave_var = self.ntot
            to_upper = False
            ub_b = self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_low = np.where(col > _TOL, self.beta / col, np.inf)
                t_up = np.where((col < -_TOL) & np.isfinite(ub_b), (ub_b - self.beta) / -col, np.inf)
            t_low = np.maximum(t_low, 0.0)
            t_up = np.maximum(t_up, 0.0)
            t_row = np.minimum(t_low, t_up)
            if t_row.size and np.isfinite(t_row.min()):
                t_min = t_row.min()
                if t_min < t_best - _TOL * max(1.0, t_min):
                    ties = np.flatnonzero(t_row <= t_min + _TOL * max(1.0, t_min))
                    r = int(ties[np.argmin(self.basis[ties])])
                    t_best, leave, leave_var = t_min, r, self.basis[r]
                    to_upper = t_up[r] <= t_low[r]
            if not np.isfinite(t_best):
                return "unbounded"
            start = self.ub[j] if self.at_upper[j] else 0.0
            self.beta -= col * t_best
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            self.pivot(leave, j)
            self.beta[leave] = start + step * t_best
            self.is_basic[leave_var] = False
            self.at_upper[leave_var] = to_upper
            self.is_basic[j] = True
            self.at_upper[j] = False
            self.basis[leave] = j
            d = d - d[j] * self.T[leave]
            np.clip(self.beta, 0.0, None, out=self.beta)

    def values(self):
        v = np.where(self.at_upper, self.ub, 0.0)
        v[self.basis] = self.beta
        return v


def solve_simplex(prob: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Solve ``prob`` to an optimal basic solution.

    Status is ``optimal``, ``infeasible``, ``unbounded`` or ``iteration_limit``.
    ``active`` flags rows satisfied with equality; ``degenerate`` is set when a
    movable nonbasic variable has zero reduced cost, i.e. alternative optimal
    vertices may exist.
    """
    m, n = prob.shape
    sense_obj = 1.0 if prob.maximize else -1.0
    row_sign = np.array([1.0 if s == "<=" else -1.0 for s in prob.senses])
    A = prob.A * row_sign[:, None]
    b = prob.b * row_sign
    w = np.max(np.abs(A), axis=1) if n else np.ones(m)
    w = np.where(w > 0, w, 1.0)
    A = A / w[:, None]
    b = b / w
    c = prob.c * sense_obj
    cs = np.max(np.abs(c)) if n and np.any(c) else 1.0
    c = c / cs

    # map each original variable to one or two nonnegative columns
    cols, col_cost, col_ub, col_map = [], [], [], []
    shift = np.zeros(n)
    for j in range(n):
        lo, hi = prob.lower[j], prob.upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append(A[:, j]), col_cost.append(c[j]), col_ub.append(hi - lo), col_map.append((j, 1.0))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append(-A[:, j]), col_cost.append(-c[j]), col_ub.append(np.inf), col_map.append((j, -1.0))
        else:
            cols.append(A[:, j]), col_cost.append(c[j]), col_ub.append(np.inf), col_map.append((j, 1.0))
            cols.append(-A[:, j]), col_cost.append(-c[j]), col_ub.append(np.inf), col_map.append((j, -1.0))
    k = len(cols)
    Ay = np.column_stack(cols) if k else np.zeros((m, 0))
    rhs = b - A @ shift
    neg = rhs < 0
    art_rows = np.flatnonzero(neg)
    na = art_rows.size
    T = np.zeros((m, k + m + na))
    T[:, :k] = Ay
    T[:, k : k + m] = np.eye(m)
    T[neg] *= -1.0
    for a, i in enumerate(art_rows):
        T[i, k + m + a] = 1.0
    beta = np.abs(rhs)
    basis = np.arange(k, k + m)
    basis[art_rows] = k + m + np.arange(na)
    ub = np.concatenate([col_ub, np.full(m, np.inf), np.full(na, np.inf)])
    tab = _Tableau(T, beta, basis, ub, k)
    limit = max_iter if max_iter is not None else 50 * (m + k + 10)

    if na:
        cost1 = np.zeros(tab.ntot)
        cost1[k + m :] = -1.0
        status = tab.run(cost1, limit)
        if status != "optimal":
            return _failed(status, n, m, tab.iterations)
        if tab.values()[k + m :].sum() > 1e-7 * max(1.0, np.abs(rhs).max()):
            return _failed("infeasible", n, m, tab.iterations)
        for r in range(m):
            if tab.basis[r] >= k + m:
                nb = np.flatnonzero(~tab.is_basic[: k + m] & (np.abs(tab.T[r, : k + m]) > 1e-7))
                if nb.size:
                    j = int(nb[0])
                    val = tab.ub[j] if tab.at_upper[j] else 0.0
                    tab.pivot(r, j)
                    tab.is_basic[tab.basis[r]] = False
                    tab.is_basic[j] = True
                    tab.at_upper[j] = False
                    tab.basis[r] = j
                    tab.beta[r] = val
        tab.ub[k + m :] = 0.0

    cost = np.zeros(tab.ntot)
    cost[:k] = col_cost
    status = tab.run(cost, limit)
    if status != "optimal":
        return _failed(status, n, m, tab.iterations)

    vals = tab.values()
    x = shift.copy()
    for col, (j, sgn) in enumerate(col_map):
        x[j] += sgn * vals[col]
    d = tab.reduced_costs(cost)
    nonbasic = ~tab.is_basic
    nonbasic[k + m :] = False
    movable = tab.at_upper | (tab.ub > _TOL)
    degenerate = bool(np.any(nonbasic & movable & (np.abs(d) <= 1e-7)))
    slack = vals[k : k + m]
    slack_scale = np.maximum(1.0, np.abs(b))
    active = (~tab.is_basic[k : k + m]) | (slack <= 1e-9 * slack_scale)
    y_int = -d[k : k + m]
    duals = sense_obj * cs * y_int * row_sign / w
    return LpSolution(
        status="optimal",
        x=x,
        objective=float(prob.c @ x),
        active=active,
        duals=duals,
        degenerate=degenerate,
        iterations=tab.iterations,
        basis=tuple(int(v) for v in tab.basis),
    )


def _failed(status, n, m, iterations):
    return LpSolution(
        status=status,
        x=np.full(n, np.nan),
        objective=float("nan"),
        active=np.zeros(m, dtype=bool),
        duals=np.full(m, np.nan),
        degenerate=False,
        iterations=iterations,
    )
