"""Engine-independent envelope result and its physical verification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .feeder import Feeder
from .powerflow import solve_ac_batch, solve_linear

__all__ = ["DoeResult", "CASES", "check_case", "binding_constraints", "build_result"]

CASES = ("import", "export")
BIND_TOL = 1e-6


def check_case(case: str) -> str:
    if case not in CASES:
        raise ValueError(f"case must be 'import' or 'export', got {case!r}")
    return case


@dataclass(frozen=True)
class DoeResult:
    """Envelope allocation returned by every engine.

    ``envelopes`` are W per node, signed by case (import >= 0, export <= 0).
    ``v_min_pu``, ``v_max_pu`` and ``s01_kva`` are evaluated with the model the
    engine optimised against (linear for LACE/LP, AC for NLP); the ``ac_*``
    fields always come from an AC re-simulation of the allocation.
    ``s01_kva`` carries the sign of the feeder-head real power.
    """

    engine: str
    case: str
    envelopes: np.ndarray
    binding: tuple[str, ...]
    model: str
    v_min_pu: float
    v_max_pu: float
    s01_kva: float
    ac_v_min_pu: float
    ac_v_max_pu: float
    ac_s01_kva: float
    status: str = "optimal"
    node_labels: tuple[str, ...] = ()
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def combined(self) -> float:
        return float(np.sum(self.envelopes))

    @property
    def envelopes_kw(self) -> np.ndarray:
        return self.envelopes / 1e3

    def to_dict(self) -> dict:
        """JSON-ready summary; NaN becomes ``None`` and only scalar diagnostics are kept."""
        labels = self.node_labels or tuple(str(i + 1) for i in range(len(self.envelopes)))

        def num(v):
            return float(v) if np.isfinite(v) else None

        diag = {k: v for k, v in self.diagnostics.items() if isinstance(v, (bool, int, str))}
        diag.update({k: num(v) for k, v in self.diagnostics.items() if isinstance(v, float)})
        return {
            "engine": self.engine,
            "case": self.case,
            "status": self.status,
            "model": self.model,
            "envelopes_kw": {lab: float(v) / 1e3 for lab, v in zip(labels, self.envelopes)},
            "combined_kw": self.combined / 1e3,
            "binding": list(self.binding),
            "v_min_pu": num(self.v_min_pu),
            "v_max_pu": num(self.v_max_pu),
            "s01_kva": num(self.s01_kva),
            "ac_v_min_pu": num(self.ac_v_min_pu),
            "ac_v_max_pu": num(self.ac_v_max_pu),
            "ac_s01_kva": num(self.ac_s01_kva),
            "diagnostics": diag,
        }


def binding_constraints(f: Feeder, p: np.ndarray, u: np.ndarray, head_s: float, tol: float = BIND_TOL) -> tuple[str, ...]:
    """Tags of the limits that are active for allocation ``p``."""
    tags = []
    if head_s >= f.transformer_rating * (1.0 - tol):
        tags.append("thermal")
    for i in range(f.node_count):
        if u[i] <= f.u_min * (1.0 + tol) or u[i] >= f.u_max * (1.0 - tol):
            tags.append(f"voltage@{f.label(i + 1)}")
    for i in range(f.node_count):
        for bound in (f.envelope_lower[i], f.envelope_upper[i]):
            if np.isfinite(bound) and bound != 0.0 and abs(p[i] - bound) <= tol * abs(bound):
                tags.append(f"envelope-bound@{f.label(i + 1)}")
    return tuple(tags)


def build_result(
    f: Feeder,
    engine: str,
    case: str,
    p: np.ndarray,
    model: str,
    status: str = "optimal",
    diagnostics: dict | None = None,
    ac_state=None,
) -> DoeResult:
    p = np.asarray(p, dtype=float).copy()
    p.flags.writeable = False
    vb = f.base_voltage
    if ac_state is None:
        ac_state = solve_ac_batch(f, p[None, :])
    if ac_state.converged[0]:
        ac_u = ac_state.u[0]
        ac_vals = (
            float(np.sqrt(ac_u.min()) / vb),
            float(np.sqrt(ac_u.max()) / vb),
            float(np.copysign(ac_state.feeder_head_s[0], ac_state.feeder_head_p[0]) / 1e3),
        )
    else:
        ac_u = None
        ac_vals = (float("nan"),) * 3
    if model == "linear":
        lin = solve_linear(f, p)
        u, head_s, head_p = lin.u, lin.feeder_head_s, lin.feeder_head_p
    else:
        if ac_u is None:
            raise ValueError("AC re-simulation of an AC-model result did not converge")
        u, head_s, head_p = ac_u, float(ac_state.feeder_head_s[0]), float(ac_state.feeder_head_p[0])
    return DoeResult(
        engine=engine,
        case=case,
        envelopes=p,
        binding=binding_constraints(f, p, u, head_s),
        model=model,
        v_min_pu=float(np.sqrt(u.min()) / vb),
        v_max_pu=float(np.sqrt(u.max()) / vb),
        s01_kva=float(np.copysign(head_s, head_p) / 1e3),
        ac_v_min_pu=ac_vals[0],
        ac_v_max_pu=ac_vals[1],
        ac_s01_kva=ac_vals[2],
        status=status,
        node_labels=tuple(f.labels[1:]),
        diagnostics=dict(diagnostics or {}),
    )
