"""Branch-flow power flow on radial feeders.

Two models are provided:

* the full AC branch-flow equations, solved by a backward/forward sweep
  (:func:`solve_ac`, batched in :func:`solve_ac_batch`);
* the loss-free linear model (:func:`solve_linear`).

``p`` arguments are the controllable envelope injections per node in W,
positive for consumption. They are added to the feeder's base load.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import Feeder

__all__ = [
    "PowerFlowError",
    "PreViolatedNetwork",
    "ThermalInfeasible",
    "BranchFlowState",
    "AcBatch",
    "SpareCapacity",
    "solve_linear",
    "solve_ac",
    "solve_ac_batch",
    "ac_residuals",
    "spare_capacity",
]

AC_TOL = 1e-8
AC_MAX_ITER = 100


class PowerFlowError(RuntimeError):
    """AC sweep did not converge (operating point close to voltage collapse)."""


class PreViolatedNetwork(ValueError):
    """The base operating point already violates a network limit."""

    def __init__(self, quantity: str, value: float, message: str | None = None):
        self.quantity = quantity
        self.value = value
        super().__init__(message or f"pre-violated network: {quantity} = {value:.6g}")


class ThermalInfeasible(PreViolatedNetwork):
    """Base reactive demand alone exceeds the transformer rating."""


@dataclass(frozen=True)
class BranchFlowState:
    """Per-line flows (indexed by receiving node) and per-node squared voltages."""

    line_p: np.ndarray
    line_q: np.ndarray
    current_sq: np.ndarray
    u: np.ndarray
    feeder_head_p: float
    feeder_head_q: float
    model: str = "ac"
    iterations: int = 1

    @property
    def feeder_head_s(self) -> float:
        return float(np.hypot(self.feeder_head_p, self.feeder_head_q))

    @property
    def voltage(self) -> np.ndarray:
        return np.sqrt(self.u)


def _net_load(f: Feeder, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != f.node_count:
        raise ValueError(f"expected {f.node_count} injections, got {p.shape[-1]}")
    return p + f.base_load_p


def _accumulate(f: Feeder, vals: np.ndarray) -> np.ndarray:
    """Sum node quantities over subtrees. ``vals`` is (N,) or (N, B); returns a copy."""
    out = np.array(vals, dtype=float, copy=True)
    parent = f.parent
    for i in f.order[::-1]:
        par = parent[i]
        if par >= 0:
            out[par] += out[i]
    return out


def _forward(f: Feeder, drop: np.ndarray) -> np.ndarray:
    """Voltages from per-line squared-voltage drops, walking away from the slack."""
    u = np.empty_like(drop)
    parent = f.parent
    u0 = f.u0
    for i in f.order:
        par = parent[i]
        u[i] = (u0 if par < 0 else u[par]) - drop[i]
    return u


def _head(f: Feeder, flows: np.ndarray):
    return flows[f.slack_adjacent].sum(axis=0)


def solve_linear(f: Feeder, p) -> BranchFlowState:
    """Loss-free linear branch flow: one backward and one forward pass."""
    load = _net_load(f, p)
    P = _accumulate(f, load)
    Q = _accumulate(f, f.base_load_q)
    u = _forward(f, 2.0 * f.resistance * P + 2.0 * f.reactance * Q)
    return BranchFlowState(
        line_p=P,
        line_q=Q,
        current_sq=np.zeros(f.node_count),
        u=u,
        feeder_head_p=float(_head(f, P)),
        feeder_head_q=float(_head(f, Q)),
        model="linear",
    )


def solve_linear_batch(f: Feeder, p: np.ndarray):
    """Vectorised linear model for ``p`` of shape (B, N); returns (u, head_p, head_q)."""
    load = _net_load(f, p).T
    P = _accumulate(f, load)
    Q = _accumulate(f, f.base_load_q)
    u = _forward(f, 2.0 * f.resistance[:, None] * P + (2.0 * f.reactance * Q)[:, None])
    return u.T, _head(f, P), float(_head(f, Q))


@dataclass(frozen=True)
class AcBatch:
    """Batched AC results; arrays are shaped (B, N) or (B,)."""

    line_p: np.ndarray
    line_q: np.ndarray
    current_sq: np.ndarray
    u: np.ndarray
    feeder_head_p: np.ndarray
    feeder_head_q: np.ndarray
    converged: np.ndarray
    iterations: int

    @property
    def feeder_head_s(self) -> np.ndarray:
        return np.hypot(self.feeder_head_p, self.feeder_head_q)


def solve_ac_batch(
    f: Feeder,
    p: np.ndarray,
    *,
    tol: float = AC_TOL,
    max_iter: int = AC_MAX_ITER,
    u_init: np.ndarray | None = None,
) -> AcBatch:
    """Backward/forward sweep for a batch of injection vectors ``p`` (B, N).

    The backward pass accumulates P and Q including the ``r*l`` and ``x*l``
    loss terms of the previous iterate; currents follow from the sending-end
    squared voltage; the forward pass applies the full voltage-drop equation.
    Converged when the largest change of squared voltage is below ``tol * U0``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    load_p = _net_load(f, p).T
    B = load_p.shape[1]
    load_q = np.broadcast_to(f.base_load_q[:, None], load_p.shape)
    r = f.resistance[:, None]
    x = f.reactance[:, None]
    z2 = r**2 + x**2
    parent = f.parent
    u0 = f.u0
    u = np.full_like(load_p, u0) if u_init is None else np.array(np.atleast_2d(u_init).T, dtype=float)
    if u.shape != load_p.shape:
        u = np.broadcast_to(u, load_p.shape).copy()
    l = np.zeros_like(load_p)
    conv = np.zeros(B, dtype=bool)
    ok = np.ones(B, dtype=bool)
    it = 0
    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            P = _accumulate(f, load_p + r * l)
            Q = _accumulate(f, load_q + x * l)
            u_send = np.where(parent[:, None] < 0, u0, u[np.maximum(parent, 0)])
            l = (P**2 + Q**2) / u_send
            u_new = _forward(f, 2.0 * r * P + 2.0 * x * Q - z2 * l)
            delta = np.max(np.abs(u_new - u), axis=0)
            u = u_new
            ok = np.all(np.isfinite(u), axis=0) & np.all(u > 0, axis=0)
            conv = ok & (delta < tol * u0)
            if np.all(conv | ~ok):
                break
    return AcBatch(
        line_p=P.T,
        line_q=Q.T,
        current_sq=l.T,
        u=u.T,
        feeder_head_p=_head(f, P),
        feeder_head_q=_head(f, Q),
        converged=conv,
        iterations=it,
    )


def solve_ac(f: Feeder, p, *, tol: float = AC_TOL, max_iter: int = AC_MAX_ITER) -> BranchFlowState:
    """Full AC branch-flow solution for a single injection vector.

    Raises :class:`PowerFlowError` when the sweep does not converge within
    ``max_iter`` iterations.
    """
    res = solve_ac_batch(f, np.asarray(p, dtype=float)[None, :], tol=tol, max_iter=max_iter)
    if not res.converged[0]:
        raise PowerFlowError(f"AC sweep did not converge in {max_iter} iterations")
    return BranchFlowState(
        line_p=res.line_p[0],
        line_q=res.line_q[0],
        current_sq=res.current_sq[0],
        u=res.u[0],
        feeder_head_p=float(res.feeder_head_p[0]),
        feeder_head_q=float(res.feeder_head_q[0]),
        model="ac",
        iterations=res.iterations,
    )


def ac_residuals(f: Feeder, p, state: BranchFlowState) -> dict[str, float]:
    """Largest relative residual of each AC branch-flow equation at ``state``."""
    load = _net_load(f, p)
    r, x = f.resistance, f.reactance
    has_parent = f.parent >= 0
    direct_p = np.zeros(f.node_count)
    direct_q = np.zeros(f.node_count)
    np.add.at(direct_p, f.parent[has_parent], state.line_p[has_parent])
    np.add.at(direct_q, f.parent[has_parent], state.line_q[has_parent])
    u_send = np.where(f.parent < 0, f.u0, state.u[np.maximum(f.parent, 0)])
    scale_p = max(np.max(np.abs(state.line_p)), 1.0)
    scale_q = max(np.max(np.abs(state.line_q)), 1.0)
    res_p = state.line_p - (r * state.current_sq + load + direct_p)
    res_q = state.line_q - (x * state.current_sq + f.base_load_q + direct_q)
    res_l = state.line_p**2 + state.line_q**2 - u_send * state.current_sq
    res_u = u_send - (state.u + 2 * r * state.line_p + 2 * x * state.line_q - (r**2 + x**2) * state.current_sq)
    return {
        "p": float(np.max(np.abs(res_p)) / scale_p),
        "q": float(np.max(np.abs(res_q)) / scale_q),
        "current": float(np.max(np.abs(res_l)) / max(scale_p**2 + scale_q**2, 1.0)),
        "voltage": float(np.max(np.abs(res_u)) / f.u0),
    }


@dataclass(frozen=True)
class SpareCapacity:
    """Thermal (W) and voltage (V^2) headroom of the base operating point."""

    p_hat_01: float
    p_breve_01: float
    e_hat: np.ndarray
    e_breve: np.ndarray
    e_tilde: np.ndarray
    p_bar_01: float
    p_tilde_01: float
    q_tilde_01: float
    e_bar: float
    e_under: float


def spare_capacity(f: Feeder) -> SpareCapacity:
    """Headroom left by the base load under the linear model.

    Raises :class:`ThermalInfeasible` when the base reactive demand exceeds
    the transformer rating, and :class:`PreViolatedNetwork` when any spare
    quantity has the wrong sign.
    """
    q_tilde = float(np.sum(f.base_load_q))
    p_tilde = float(np.sum(f.base_load_p))
    s_bar = f.transformer_rating
    if abs(q_tilde) > s_bar:
        raise ThermalInfeasible("q_tilde_01", q_tilde, f"base reactive demand {q_tilde:.1f} var exceeds rating {s_bar:.1f} VA")
    p_bar = float(np.sqrt(s_bar**2 - q_tilde**2))
    base = solve_linear(f, np.zeros(f.node_count))
    e_tilde = f.u0 - base.u
    e_bar = f.u0 - f.u_min
    e_under = f.u0 - f.u_max
    spare = SpareCapacity(
        p_hat_01=p_bar - p_tilde,
        p_breve_01=-p_bar - p_tilde,
        e_hat=e_bar - e_tilde,
        e_breve=e_under - e_tilde,
        e_tilde=e_tilde,
        p_bar_01=p_bar,
        p_tilde_01=p_tilde,
        q_tilde_01=q_tilde,
        e_bar=e_bar,
        e_under=e_under,
    )
    if spare.p_hat_01 < 0:
        raise PreViolatedNetwork("p_hat_01", spare.p_hat_01)
    if spare.p_breve_01 > 0:
        raise PreViolatedNetwork("p_breve_01", spare.p_breve_01)
    if np.any(spare.e_hat < 0):
        m = int(np.argmin(spare.e_hat))
        raise PreViolatedNetwork(f"e_hat[{f.label(m + 1)}]", float(spare.e_hat[m]))
    if np.any(spare.e_breve > 0):
        m = int(np.argmax(spare.e_breve))
        raise PreViolatedNetwork(f"e_breve[{f.label(m + 1)}]", float(spare.e_breve[m]))
    return spare
