"""Envelope LP on the linear branch-flow model, solved with the embedded simplex."""

from __future__ import annotations

import numpy as np

from .feeder import Feeder, SensitivityMatrices, sensitivity_matrices
from .powerflow import SpareCapacity, spare_capacity
from .results import DoeResult, build_result, check_case
from .simplex import LpProblem, LpSolution, solve_simplex

__all__ = ["SolverError", "assemble_lp", "run_lp_doe"]


class SolverError(RuntimeError):
    """An optimisation engine could not produce an optimal allocation."""


def assemble_lp(
    f: Feeder,
    case: str,
    S: SensitivityMatrices | None = None,
    spare: SpareCapacity | None = None,
) -> LpProblem:
    """Build the import (maximise) or export (minimise) envelope LP.

    Row 0 is the feeder-head real-power limit derived from the transformer
    rating at fixed base reactive demand; rows 1..N keep each node's linear
    voltage deviation within its spare drop (import) or rise (export).
    """
    check_case(case)
    spare = spare_capacity(f) if spare is None else spare
    S = sensitivity_matrices(f) if S is None else S
    n = f.node_count
    A = np.vstack([np.ones((1, n)), S.R])
    if case == "import":
        b = np.concatenate([[spare.p_hat_01], spare.e_hat])
        senses = ("<=",) * (n + 1)
        lower = np.zeros(n)
        upper = np.array(f.envelope_upper)
    else:
        b = np.concatenate([[spare.p_breve_01], spare.e_breve])
        senses = (">=",) * (n + 1)
        lower = np.array(f.envelope_lower)
        upper = np.zeros(n)
    labels = f.labels[1:]
    return LpProblem(
        c=np.ones(n),
        A=A,
        b=b,
        senses=senses,
        lower=lower,
        upper=upper,
        maximize=case == "import",
        row_names=("thermal",) + tuple(f"voltage@{lab}" for lab in labels),
        var_names=tuple(f"p@{lab}" for lab in labels),
    )


def run_lp_doe(f: Feeder, case: str, S: SensitivityMatrices | None = None) -> DoeResult:
    prob = assemble_lp(f, case, S=S)
    sol: LpSolution = solve_simplex(prob)
    if not sol.optimal:
        raise SolverError(f"LP-DOE {case} ended with status {sol.status}")
    p = np.where(np.abs(sol.x) < 1e-9 * max(1.0, np.abs(sol.x).max()), 0.0, sol.x)
    active_rows = tuple(name for name, a in zip(prob.row_names, sol.active) if a)
    return build_result(
        f,
        "lp",
        case,
        p,
        model="linear",
        diagnostics={
            "degenerate": sol.degenerate,
            "active_rows": active_rows,
            "duals": sol.duals,
            "iterations": sol.iterations,
        },
    )
