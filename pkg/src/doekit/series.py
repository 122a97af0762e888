"""Time series of base loads (``timestamp,node_id,p_kw,q_kvar``) for batch envelopes."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .feeder import Feeder

__all__ = ["SeriesError", "SnapshotSeries", "read_series", "SERIES_COLUMNS"]

SERIES_COLUMNS = ("timestamp", "node_id", "p_kw", "q_kvar")


class SeriesError(ValueError):
    """The series file cannot be used at all (bad header, no usable step, disorder)."""


@dataclass(frozen=True)
class SnapshotSeries:
    """Base loads per timestamp.

    ``p`` and ``q`` have shape ``(T, N)`` in W and var, columns ordered like
    the feeder's nodes. ``warnings`` lists every skipped row or step.
    """

    timestamps: tuple[datetime, ...]
    p: np.ndarray
    q: np.ndarray
    warnings: tuple[str, ...] = ()

    def __len__(self):
        return len(self.timestamps)

    def feeder_at(self, f: Feeder, k: int) -> Feeder:
        return f.with_base_load(self.p[k], self.q[k])


def read_series(path: str | os.PathLike, f: Feeder) -> SnapshotSeries:
    """Read a series CSV for feeder ``f``.

    Rows that cannot be parsed or name an unknown node are skipped with a
    warning, as are timestamps that do not cover every node exactly once.
    Timestamps must be strictly increasing in file order.
    """
    index = {lab: i for i, lab in enumerate(f.labels[1:])}
    n = f.node_count
    warnings: list[str] = []
    steps: dict[datetime, dict[int, tuple[float, float]]] = {}
    bad_steps: set[datetime] = set()
    order: list[datetime] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in SERIES_COLUMNS):
            raise SeriesError(f"series header must contain {', '.join(SERIES_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row["timestamp"].strip())
                node = index[row["node_id"].strip()]
                p_kw, q_kvar = float(row["p_kw"]), float(row["q_kvar"])
                if not (np.isfinite(p_kw) and np.isfinite(q_kvar)):
                    raise ValueError("non-finite load")
            except (KeyError, ValueError, TypeError, AttributeError) as exc:
                warnings.append(f"line {lineno}: skipped malformed row ({exc})")
                continue
            if ts not in steps:
                if order and ts <= order[-1]:
                    raise SeriesError(f"line {lineno}: timestamp {ts.isoformat()} is not after {order[-1].isoformat()}")
                order.append(ts)
                steps[ts] = {}
            if node in steps[ts]:
                warnings.append(f"line {lineno}: node {row['node_id']} repeated at {ts.isoformat()}")
                bad_steps.add(ts)
            steps[ts][node] = (p_kw * 1e3, q_kvar * 1e3)

    kept = []
    for ts in order:
        if ts in bad_steps:
            warnings.append(f"{ts.isoformat()}: skipped step with repeated nodes")
        elif len(steps[ts]) != n:
            warnings.append(f"{ts.isoformat()}: skipped step covering {len(steps[ts])} of {n} nodes")
        else:
            kept.append(ts)
    if not kept:
        raise SeriesError("no complete time step in series")
    p = np.array([[steps[ts][i][0] for i in range(n)] for ts in kept])
    q = np.array([[steps[ts][i][1] for i in range(n)] for ts in kept])
    return SnapshotSeries(tuple(kept), p, q, tuple(warnings))
