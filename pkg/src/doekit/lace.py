"""Greedy analytical envelope allocation on the linear model (LACE).

Each iteration picks the remaining node whose stand-alone voltage-limited
envelope is largest, gives it the tightest of its envelope bound, the
remaining thermal headroom and that stand-alone envelope, then charges the
allocation against the remaining thermal and voltage headroom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import Feeder, SensitivityMatrices, sensitivity_matrices
from .powerflow import spare_capacity
from .results import DoeResult, build_result, check_case

__all__ = ["LaceStep", "LaceTrace", "p_solo", "run_lace"]

GUARD_REL = 1e-9


@dataclass(frozen=True)
class LaceStep:
    node: int
    p_solo: float
    allocated: float
    limiting: str
    thermal_spare: float
    voltage_spare: np.ndarray


@dataclass(frozen=True)
class LaceTrace:
    steps: tuple[LaceStep, ...]

    def __len__(self):
        return len(self.steps)


def p_solo(S: SensitivityMatrices, e_spare: np.ndarray, case: str, active=None) -> np.ndarray:
    """Envelope each node could take alone before a voltage limit binds.

    Import: ``min_m e_hat[m] / R[m, n]``; export: ``max_m e_breve[m] / R[m, n]``.
    Entries outside ``active`` (0-based indices) are NaN. A node whose column
    of ``R`` is entirely zero is not limited by voltage and gets ``+inf``
    (import) or ``-inf`` (export).
    """
    check_case(case)
    R = S.R
    n = R.shape[0]
    idx = np.arange(n) if active is None else np.asarray(active, dtype=int)
    out = np.full(n, np.nan)
    if idx.size == 0:
        return out
    cols = R[:, idx]
    e = np.asarray(e_spare, dtype=float)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = e / cols
    if case == "import":
        ratios = np.where(cols > 0, ratios, np.inf)
        out[idx] = ratios.min(axis=0)
    else:
        ratios = np.where(cols > 0, ratios, -np.inf)
        out[idx] = ratios.max(axis=0)
    return out


def run_lace(f: Feeder, case: str, S: SensitivityMatrices | None = None) -> DoeResult:
    """Allocate import or export envelopes greedily.

    Ties between equally good nodes go to the lowest node id. Loop guards use
    a relative tolerance of 1e-9 of the initial spare capacities.
    """
    check_case(case)
    spare = spare_capacity(f)
    if S is None:
        S = sensitivity_matrices(f)
    n = f.node_count
    imp = case == "import"
    thermal = spare.p_hat_01 if imp else spare.p_breve_01
    volt = np.array(spare.e_hat if imp else spare.e_breve, dtype=float)
    bound = f.envelope_upper if imp else f.envelope_lower
    th_tol = GUARD_REL * abs(thermal)
    v_tol = GUARD_REL * np.max(np.abs(volt)) if n else 0.0

    active = list(range(n))
    p = np.zeros(n)
    steps: list[LaceStep] = []

    def capacity_left() -> bool:
        if imp:
            return thermal > th_tol and volt.min() > v_tol
        return thermal < -th_tol and volt.max() < -v_tol

    while active and capacity_left():
        solo = p_solo(S, volt, case, active)
        cand = solo[active]
        k = int(np.argmax(cand) if imp else np.argmin(cand))
        m = active[k]
        options = (("envelope-bound", bound[m]), ("thermal", thermal), ("voltage", solo[m]))
        pick = min if imp else max
        limiting, alloc = pick(options, key=lambda kv: kv[1])
        p[m] = alloc
        active.pop(k)
        thermal -= alloc
        volt -= S.R[:, m] * alloc
        steps.append(LaceStep(m + 1, float(solo[m]), float(alloc), limiting, float(thermal), volt.copy()))

    return build_result(
        f,
        "lace",
        case,
        p,
        model="linear",
        diagnostics={"trace": LaceTrace(tuple(steps)), "iterations": len(steps)},
    )
