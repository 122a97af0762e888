"""AC-exact envelopes by sequential linear programming, plus brute-force oracles.

The SLP linearises the feeder-head apparent power and all nodal voltages
around the current AC operating point using central finite differences of
the sweep solver, solves an elastic LP inside a box trust region, and accepts
the step when an l1 merit function evaluated with a fresh AC solve decreases
enough. The problem is non-convex, so a handful of starts are run (the LP-DOE
solution first) and the best AC-feasible local optimum is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .feeder import Feeder, sensitivity_matrices
from .lace import p_solo
from .lp import SolverError, run_lp_doe
from .powerflow import AcBatch, PowerFlowError, PreViolatedNetwork, solve_ac_batch, spare_capacity
from .results import DoeResult, build_result, check_case
from .simplex import LpProblem, solve_simplex

__all__ = ["SlpState", "BisectResult", "run_nlp_doe", "oracle_bisect", "oracle_grid", "ac_violation"]

FEAS_TOL = 1e-6
FD_STEP = 1.0
STEP_TOL = 1.0
MAX_OUTER = 50
PENALTY = 1e4  # per watt of linearised violation
PROBE_TOL = 1e-13


@dataclass
class SlpState:
    """Current SLP iterate and its AC evaluation."""

    p: np.ndarray
    g: np.ndarray
    u: np.ndarray
    violation: float
    merit: float
    trust: float
    jacobian: np.ndarray | None = None
    weights: np.ndarray | None = None
    iterations: int = 0
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class BisectResult:
    value: float
    limit: str
    at_bound: bool = False


def _constraint_values(f: Feeder, res: AcBatch) -> np.ndarray:
    """Scaled constraints, <= 0 when satisfied: thermal, then under-, then over-voltage."""
    s2 = (res.feeder_head_p**2 + res.feeder_head_q**2) / f.transformer_rating**2
    g_th = 0.5 * (s2 - 1.0)
    g_lo = (f.u_min - res.u) / f.u_min
    g_hi = (res.u - f.u_max) / f.u_max
    g = np.column_stack([g_th, g_lo, g_hi])
    g[~res.converged] = np.nan
    return g


def ac_violation(f: Feeder, res: AcBatch) -> np.ndarray:
    """Largest relative limit violation per batch entry (0 when feasible, inf if diverged)."""
    s = res.feeder_head_s / f.transformer_rating - 1.0
    lo = np.max((f.u_min - res.u) / f.u_min, axis=1)
    hi = np.max((res.u - f.u_max) / f.u_max, axis=1)
    v = np.maximum(np.maximum(s, lo), np.maximum(hi, 0.0))
    return np.where(res.converged, v, np.inf)


class _Slp:
    def __init__(self, f: Feeder, case: str, lb: np.ndarray, ub: np.ndarray, tol: float):
        self.f = f
        self.sign = 1.0 if case == "import" else -1.0
        self.lb = lb
        self.ub = ub
        self.tol = tol
        self.width = float(np.max(ub - lb)) if len(lb) else 0.0

    def evaluate(self, p: np.ndarray, u_init=None):
        res = solve_ac_batch(self.f, p[None, :], u_init=u_init)
        if not res.converged[0]:
            return None
        g = _constraint_values(self.f, res)[0]
        viol = float(ac_violation(self.f, res)[0])
        return g, res.u[0], viol

    def merit(self, p, g, w):
        """l1 merit in watts; ``w`` converts each constraint to watts from its boundary."""
        return -self.sign * float(np.sum(p)) + PENALTY * float(np.sum(w * np.maximum(g, 0.0)))

    def jacobian(self, p: np.ndarray, u: np.ndarray) -> np.ndarray:
        n = len(p)
        probes = np.vstack([p + FD_STEP * np.eye(n), p - FD_STEP * np.eye(n)])
        res = solve_ac_batch(self.f, probes, tol=PROBE_TOL, u_init=np.broadcast_to(u, probes.shape))
        g = _constraint_values(self.f, res)
        J = (g[:n] - g[n:]).T / (2.0 * FD_STEP)
        return np.nan_to_num(J, nan=0.0)

    def subproblem(self, st: SlpState):
        p, J = st.p, st.jacobian
        n = len(p)
        g = st.g * st.weights
        J = J * st.weights[:, None]
        lo = np.maximum(self.lb, p - st.trust)
        hi = np.minimum(self.ub, p + st.trust)
        reach = g + np.sum(np.maximum(J * (lo - p), J * (hi - p)), axis=1)
        rows = np.flatnonzero((reach >= -1e-12) | (g > 0))
        m = rows.size
        Jr = J[rows]
        A = np.hstack([Jr, -np.eye(m)]) if m else np.zeros((0, n))
        b = Jr @ p - g[rows]
        c = np.concatenate([self.sign * np.ones(n), -PENALTY * np.ones(m)])
        prob = LpProblem(
            c=c,
            A=A,
            b=b,
            senses=("<=",) * m,
            lower=np.concatenate([lo, np.zeros(m)]),
            upper=np.concatenate([hi, np.full(m, np.inf)]),
            maximize=True,
        )
        sol = solve_simplex(prob)
        if not sol.optimal:
            return None, 0.0
        p_new = np.clip(sol.x[:n], lo, hi)
        g_lin = st.g + st.jacobian @ (p_new - p)
        predicted = st.merit - self.merit(p_new, g_lin, st.weights)
        return p_new, predicted

    def solve(self, p0: np.ndarray, max_outer: int = MAX_OUTER) -> tuple[SlpState, str]:
        p = np.clip(p0, self.lb, self.ub)
        ev = self.evaluate(p)
        alpha = 1.0
        while ev is None and alpha > 1e-6:
            alpha *= 0.5
            p = p0 * alpha
            ev = self.evaluate(p)
        if ev is None:
            raise PowerFlowError("AC power flow fails at every point of the start ray")
        g, u, viol = ev
        st = SlpState(p=p, g=g, u=u, violation=viol, merit=0.0, trust=max(0.2 * self.width, 10 * STEP_TOL))
        status = "max_iter"
        for k in range(max_outer):
            st.iterations = k + 1
            if st.jacobian is None:
                st.jacobian = self.jacobian(st.p, st.u)
                jmax = np.max(np.abs(st.jacobian), axis=1)
                st.weights = 1.0 / np.where(jmax > 0, jmax, 1.0)
                st.merit = self.merit(st.p, st.g, st.weights)
            p_new, predicted = self.subproblem(st)
            if p_new is None:
                st.trust *= 0.5
                continue
            if predicted <= 1e-9 * max(1.0, abs(st.merit)):
                if st.violation <= self.tol:
                    status = "converged"
                    break
                st.trust *= 0.5
                if st.trust < 1e-3:
                    status = "stalled"
                    break
                continue
            ev = self.evaluate(p_new, u_init=st.u[None, :])
            accepted = False
            if ev is not None:
                g_new, u_new, viol_new = ev
                m_new = self.merit(p_new, g_new, st.weights)
                accepted = st.merit - m_new >= 0.1 * predicted
            st.history.append((k, float(np.sum(p_new)), accepted, st.trust))
            if accepted:
                step = float(np.max(np.abs(p_new - st.p)))
                st.p, st.g, st.u, st.violation = p_new, g_new, u_new, viol_new
                st.jacobian = None
                st.trust = min(2.0 * st.trust, max(self.width, 10 * STEP_TOL))
                if step < STEP_TOL and st.violation <= self.tol:
                    status = "converged"
                    break
            else:
                st.trust *= 0.5
                if st.trust < 1e-3:
                    status = "stalled"
                    break
        return st, status

    def restore(self, p: np.ndarray) -> np.ndarray:
        """Scale ``p`` toward zero until the AC point is feasible (base case is)."""
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ev = self.evaluate(p * mid)
            if ev is not None and ev[2] <= 0.0:
                lo = mid
            else:
                hi = mid
        return p * lo


def _envelope_box(f: Feeder, case: str) -> tuple[np.ndarray, np.ndarray]:
    cap = 3.0 * f.transformer_rating + abs(float(np.sum(f.base_load_p)))
    if case == "import":
        return np.zeros(f.node_count), np.minimum(f.envelope_upper, cap)
    return np.maximum(f.envelope_lower, -cap), np.zeros(f.node_count)


def _single_node_starts(f: Feeder, case: str, lb, ub) -> list[np.ndarray]:
    spare = spare_capacity(f)
    S = sensitivity_matrices(f)
    imp = case == "import"
    movable = np.flatnonzero((ub - lb) > 0)
    if movable.size == 0:
        return []
    solo = p_solo(S, spare.e_hat if imp else spare.e_breve, case, movable)
    thermal = spare.p_hat_01 if imp else spare.p_breve_01
    starts = []
    up = movable[np.argmax(np.abs(solo[movable]))]
    down = movable[np.lexsort((-np.abs(solo[movable]), -f.path_resistance[movable]))[0]]
    for node in (up, down):
        mag = min(abs(thermal), abs(solo[node]), ub[node] - lb[node])
        p = np.zeros(f.node_count)
        p[node] = mag if imp else -mag
        starts.append(p)
    return starts


def run_nlp_doe(f: Feeder, case: str, tol: float = FEAS_TOL, multistart: bool = True) -> DoeResult:
    """AC-exact import or export envelopes.

    Starts from the LP-DOE allocation, then from the single-node allocations
    at the most upstream and the electrically deepest participating nodes.
    Returned allocations are AC-feasible to ``tol`` (relative); if an SLP run
    ends infeasible the allocation is scaled back until it is feasible and the
    status reports ``restored``.
    """
    check_case(case)
    spare_capacity(f)
    base = solve_ac_batch(f, np.zeros((1, f.node_count)))
    if not base.converged[0]:
        raise PowerFlowError("AC power flow does not converge at the base load")
    base_violation = float(ac_violation(f, base)[0])
    if base_violation > tol:
        raise PreViolatedNetwork("ac_base_violation", base_violation, "base operating point violates AC limits")
    lb, ub = _envelope_box(f, case)
    slp = _Slp(f, case, lb, ub, tol)
    if slp.width <= 0:
        return build_result(f, "nlp", case, np.zeros(f.node_count), model="ac", status="converged",
                            diagnostics={"starts": 0, "iterations": 0})
    try:
        warm = np.array(run_lp_doe(f, case).envelopes)
    except SolverError:
        warm = np.zeros(f.node_count)
    starts = [warm]
    if multistart:
        for s in _single_node_starts(f, case, lb, ub):
            if not any(np.allclose(s, t) for t in starts):
                starts.append(s)

    runs = []
    for p0 in starts:
        st, status = slp.solve(p0)
        p = st.p
        if st.violation > tol:
            p = slp.restore(p)
            status = "restored"
        runs.append((slp.sign * float(np.sum(p)), p, status, st.iterations))
    best = max(range(len(runs)), key=lambda i: (runs[i][0], -i))
    _, p, status, iters = runs[best]
    p = np.where(np.abs(p) < 1e-6, 0.0, p)
    return build_result(
        f,
        "nlp",
        case,
        p,
        model="ac",
        status=status,
        diagnostics={
            "starts": len(starts),
            "best_start": best,
            "iterations": iters,
            "start_objectives_kw": [r[0] * slp.sign / 1e3 for r in runs],
            "start_status": [r[2] for r in runs],
        },
    )


def _ac_feasible(f: Feeder, p: np.ndarray) -> np.ndarray:
    res = solve_ac_batch(f, np.atleast_2d(p))
    return ac_violation(f, res) <= 0.0


def _limit_at(f: Feeder, p: np.ndarray) -> str:
    res = solve_ac_batch(f, p[None, :])
    if not res.converged[0]:
        return "collapse"
    if res.feeder_head_s[0] > f.transformer_rating:
        return "thermal"
    return "voltage"


def oracle_bisect(f: Feeder, node: int, case: str, tol: float = 0.1) -> BisectResult:
    """Largest single-node envelope (all other nodes at zero) by bisection on the AC model.

    ``node`` is 1-based. ``limit`` names the first constraint that binds
    (``thermal``, ``voltage`` or ``collapse``); when the envelope bound itself
    is feasible it is returned with ``at_bound`` set.
    """
    check_case(case)
    sgn = 1.0 if case == "import" else -1.0
    i = node - 1
    bound = f.envelope_upper[i] if case == "import" else -f.envelope_lower[i]

    def point(v):
        p = np.zeros(f.node_count)
        p[i] = sgn * v
        return p

    if bound == 0.0:
        return BisectResult(0.0, "envelope-bound", True)
    if np.isfinite(bound):
        if _ac_feasible(f, point(bound))[0]:
            return BisectResult(sgn * bound, "envelope-bound", True)
        hi = bound
    else:
        hi = f.transformer_rating
        while _ac_feasible(f, point(hi))[0]:
            hi *= 2.0
            if hi > 1e3 * f.transformer_rating:
                return BisectResult(sgn * hi, "unbounded", True)
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _ac_feasible(f, point(mid))[0]:
            lo = mid
        else:
            hi = mid
    return BisectResult(sgn * lo, _limit_at(f, point(hi)))


def oracle_grid(f: Feeder, case: str, resolution: float = 100.0, chunk: int = 200_000) -> DoeResult:
    """Exhaustive AC search over a regular grid of envelope values (N <= 3).

    Each node's range runs from zero to 10% beyond its single-node AC limit,
    which bounds it in any feasible joint allocation.
    """
    check_case(case)
    if f.node_count > 3:
        raise ValueError("oracle_grid is limited to feeders with at most 3 nodes")
    sgn = 1.0 if case == "import" else -1.0
    axes = []
    for node in range(1, f.node_count + 1):
        solo = oracle_bisect(f, node, case)
        top = abs(solo.value)
        bound = f.envelope_upper[node - 1] if case == "import" else -f.envelope_lower[node - 1]
        top = min(1.1 * top + resolution, bound)
        axes.append(sgn * np.arange(0.0, top + 1e-9, resolution))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, f.node_count)
    best_val, best_p, feasible_count = -np.inf, np.zeros(f.node_count), 0
    for start in range(0, len(mesh), chunk):
        pts = mesh[start : start + chunk]
        ok = _ac_feasible(f, pts)
        feasible_count += int(ok.sum())
        if not ok.any():
            continue
        vals = sgn * pts[ok].sum(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_p = vals[k], pts[ok][k]
    return build_result(
        f,
        "grid",
        case,
        best_p,
        model="ac",
        status="exhaustive",
        diagnostics={"points": len(mesh), "feasible": feasible_count, "resolution": resolution},
    )
