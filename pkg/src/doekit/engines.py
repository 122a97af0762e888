"""Name-based access to the three envelope engines."""

from __future__ import annotations

from typing import Callable

from .feeder import Feeder
from .lace import run_lace
from .lp import run_lp_doe
from .nlp import run_nlp_doe
from .results import DoeResult, check_case

__all__ = ["ENGINES", "run_engine"]

ENGINES: dict[str, Callable[..., DoeResult]] = {
    "lace": run_lace,
    "lp": run_lp_doe,
    "nlp": run_nlp_doe,
}


def run_engine(f: Feeder, engine: str, case: str, tolerance: float | None = None) -> DoeResult:
    """Run ``engine`` on ``f``; ``tolerance`` only affects the NLP engine."""
    check_case(case)
    try:
        fn = ENGINES[engine]
    except KeyError:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(ENGINES)}") from None
    if engine == "nlp" and tolerance is not None:
        return fn(f, case, tol=tolerance)
    return fn(f, case)
