"""Rendering of envelope results as tables, CSV and JSON documents."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

from .engines import run_engine
from .feeder import Feeder
from .results import CASES, DoeResult

__all__ = ["Results", "run_all", "render_table", "render_csv", "report_document", "render", "write_atomic"]

Results = dict[str, dict[str, DoeResult]]

_ENGINE_NAMES = {"lace": "LACE", "lp": "LP", "nlp": "NLP", "grid": "GRID"}


def run_all(f: Feeder, engines, cases=CASES, tolerance: float | None = None) -> Results:
    """``{engine: {case: DoeResult}}`` for every requested engine and case."""
    return {e: {c: run_engine(f, e, c, tolerance) for c in cases} for e in engines}


def _num(value: float, digits: int) -> str:
    text = f"{value:.{digits}f}"
    # avoid "-0.0" for values that round to zero
    return text[1:] if text.startswith("-") and float(text) == 0.0 else text


def _pair(by_case: dict[str, DoeResult], getter, digits: int) -> str:
    cells = [_num(getter(by_case[c]), digits) if c in by_case else "-" for c in ("export", "import")]
    return " / ".join(cells)


def render_table(f: Feeder, results: Results) -> str:
    """Fixed-width table with ``export / import`` cells.

    Envelopes and the combined sum are in kW with 1 decimal, the voltage
    column shows the highest export-case and lowest import-case voltage
    (p.u., 3 decimals) and S01 is the signed feeder-head apparent power in
    kVA with 1 decimal.
    """
    labels = f.labels[1:]
    header = ["Approach"] + [f"p{lab} (kW)" for lab in labels] + ["Voltage (p.u.)", "S01 (kVA)", "Combined (kW)"]
    rows = []
    for engine, by_case in results.items():
        row = [_ENGINE_NAMES.get(engine, engine.upper())]
        for i in range(len(labels)):
            row.append(_pair(by_case, lambda r, i=i: r.envelopes[i] / 1e3, 1))
        v_exp = _num(by_case["export"].v_max_pu, 3) if "export" in by_case else "-"
        v_imp = _num(by_case["import"].v_min_pu, 3) if "import" in by_case else "-"
        row.append(f"{v_exp} / {v_imp}")
        row.append(_pair(by_case, lambda r: r.s01_kva, 1))
        row.append(_pair(by_case, lambda r: r.combined / 1e3, 1))
        rows.append(row)
    widths = [max(len(r[k]) for r in [header] + rows) for k in range(len(header))]
    lines = [" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in [header] + rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_csv(f: Feeder, results: Results) -> str:
    labels = f.labels[1:]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["engine", "case", "status", "combined_kw", "v_min_pu", "v_max_pu", "s01_kva", "binding"]
        + [f"p_{lab}_kw" for lab in labels]
    )
    for engine, by_case in results.items():
        for case, r in by_case.items():
            w.writerow(
                [engine, case, r.status, f"{r.combined / 1e3:.4f}", f"{r.v_min_pu:.6f}", f"{r.v_max_pu:.6f}",
                 f"{r.s01_kva:.4f}", ";".join(r.binding)]
                + [f"{v / 1e3:.4f}" for v in r.envelopes]
            )
    return buf.getvalue()


def report_document(f: Feeder, results: Results) -> dict:
    return {
        "feeder": f.name,
        "nodes": list(f.labels[1:]),
        "results": {e: {c: r.to_dict() for c, r in by_case.items()} for e, by_case in results.items()},
    }


def render(f: Feeder, results: Results, fmt: str) -> str:
    if fmt == "table":
        return render_table(f, results)
    if fmt == "csv":
        return render_csv(f, results)
    if fmt == "json":
        return json.dumps(report_document(f, results), indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
