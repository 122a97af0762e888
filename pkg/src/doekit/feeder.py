"""Radial feeder model, file loader and common-path sensitivity matrices.

Internal units are SI throughout: W, var, V (squared where noted), ohm.
Node ids run 1..N with 0 reserved for the slack (substation) bus. Per-node
arrays are 0-based, so ``array[i]`` belongs to node ``i + 1``; per-line
arrays are indexed by the line's receiving (child) node in the same way.
"""

from __future__ import annotations

import dataclasses
import json
import os
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Any, Mapping, Sequence

import jsonschema
import numpy as np

__all__ = [
    "FeederError",
    "LineSegment",
    "Feeder",
    "TopologyReport",
    "SensitivityMatrices",
    "FEEDER_SCHEMA",
    "load_feeder",
    "feeder_to_document",
    "packaged_feeder",
    "validate_radial",
    "sensitivity_matrices",
]


class FeederError(ValueError):
    """Raised for schema violations, non-radial topologies or non-physical data."""

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        super().__init__(message)
        self.diagnostics = list(diagnostics) or [message]


@dataclass(frozen=True)
class LineSegment:
    from_node: int
    to_node: int
    resistance: float
    reactance: float


def _frozen_array(values, n: int, fill: float | None = None) -> np.ndarray:
    if values is None:
        arr = np.full(n, fill, dtype=float)
    else:
        arr = np.array(values, dtype=float).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Feeder:
    """A single-phase equivalent radial distribution feeder.

    Voltages are magnitudes in volts; the solvers work on squared voltages.
    ``base_voltage`` is only used to express results in per-unit.
    Envelope bounds default to an unbounded box (``-inf``/``+inf``).
    """

    lines: tuple[LineSegment, ...]
    base_load_p: np.ndarray
    base_load_q: np.ndarray
    slack_voltage: float = 230.0
    voltage_min: float = 207.0
    voltage_max: float = 253.0
    transformer_rating: float = 20e3
    envelope_lower: np.ndarray | None = None
    envelope_upper: np.ndarray | None = None
    base_voltage: float = 230.0
    name: str = "feeder"
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        n = len(np.asarray(self.base_load_p).reshape(-1))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "base_load_p", _frozen_array(self.base_load_p, n))
        object.__setattr__(self, "base_load_q", _frozen_array(self.base_load_q, n))
        object.__setattr__(self, "envelope_lower", _frozen_array(self.envelope_lower, n, -np.inf))
        object.__setattr__(self, "envelope_upper", _frozen_array(self.envelope_upper, n, np.inf))
        for arr_name in ("base_load_q", "envelope_lower", "envelope_upper"):
            if len(getattr(self, arr_name)) != n:
                raise FeederError(f"{arr_name} has {len(getattr(self, arr_name))} entries, expected {n}")
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(n + 1)))
        elif len(self.labels) != n + 1:
            raise FeederError("labels must name the slack and every node")
        else:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def node_count(self) -> int:
        return len(self.base_load_p)

    @property
    def u0(self) -> float:
        """Squared slack voltage (V^2)."""
        return self.slack_voltage**2

    @property
    def u_min(self) -> float:
        return self.voltage_min**2

    @property
    def u_max(self) -> float:
        return self.voltage_max**2

    @cached_property
    def parent(self) -> np.ndarray:
        """0-based parent index per node, ``-1`` for slack-adjacent nodes."""
        par = np.full(self.node_count, -2, dtype=int)
        for ln in self.lines:
            if 1 <= ln.to_node <= self.node_count:
                par[ln.to_node - 1] = ln.from_node - 1
        par.flags.writeable = False
        return par

    @cached_property
    def resistance(self) -> np.ndarray:
        return self._line_array("resistance")

    @cached_property
    def reactance(self) -> np.ndarray:
        return self._line_array("reactance")

    def _line_array(self, attr: str) -> np.ndarray:
        arr = np.zeros(self.node_count)
        for ln in self.lines:
            if 1 <= ln.to_node <= self.node_count:
                arr[ln.to_node - 1] = getattr(ln, attr)
        arr.flags.writeable = False
        return arr

    @cached_property
    def order(self) -> np.ndarray:
        """Breadth-first node order (0-based); parents always precede children."""
        report = validate_radial(self)
        if not report.ok:
            raise FeederError("feeder is not a radial tree", report.problems)
        return np.array(report.bfs_order, dtype=int)

    @cached_property
    def depth(self) -> np.ndarray:
        """Number of line segments between the slack and each node."""
        d = np.zeros(self.node_count, dtype=int)
        for i in self.order:
            d[i] = 1 if self.parent[i] < 0 else d[self.parent[i]] + 1
        return d

    @cached_property
    def path_resistance(self) -> np.ndarray:
        """Summed resistance from the slack to each node (ohm)."""
        out = np.zeros(self.node_count)
        for i in self.order:
            up = 0.0 if self.parent[i] < 0 else out[self.parent[i]]
            out[i] = up + self.resistance[i]
        return out

    @property
    def slack_adjacent(self) -> np.ndarray:
        return np.flatnonzero(self.parent == -1)

    def with_changes(self, **changes: Any) -> "Feeder":
        return dataclasses.replace(self, **changes)

    def with_base_load(self, p, q) -> "Feeder":
        return dataclasses.replace(self, base_load_p=np.asarray(p, float), base_load_q=np.asarray(q, float))

    def exclude_nodes(self, nodes: Sequence[int]) -> "Feeder":
        """Copy with the given nodes (1-based) marked non-participant (zero envelope box)."""
        lo = np.array(self.envelope_lower)
        hi = np.array(self.envelope_upper)
        for n in nodes:
            lo[n - 1] = 0.0
            hi[n - 1] = 0.0
        return dataclasses.replace(self, envelope_lower=lo, envelope_upper=hi)

    def label(self, node: int) -> str:
        """Original file label of 1-based node id ``node``."""
        return self.labels[node]


@dataclass(frozen=True)
class TopologyReport:
    ok: bool
    connected: bool
    acyclic: bool
    depth: tuple[int, ...]
    lateral_count: int
    slack_adjacent: tuple[int, ...]
    single_root: bool
    zero_resistance_paths: tuple[int, ...]
    bfs_order: tuple[int, ...] = field(repr=False)
    problems: tuple[str, ...] = ()


def validate_radial(f: Feeder) -> TopologyReport:
    """Check that ``f`` is a tree rooted at the slack and describe its shape.

    Failures are reported in ``problems`` rather than raised. Depths are -1
    for nodes that cannot be reached from the slack.
    """
    n = f.node_count
    problems: list[str] = []
    seen_child: dict[int, int] = {}
    acyclic = True
    for k, ln in enumerate(f.lines):
        if not (1 <= ln.to_node <= n) or not (0 <= ln.from_node <= n):
            problems.append(f"line {k} references unknown node ({ln.from_node}->{ln.to_node})")
            continue
        if ln.from_node == ln.to_node:
            problems.append(f"line {k} is a self loop at node {ln.to_node}")
            acyclic = False
        if ln.to_node in seen_child:
            problems.append(f"node {ln.to_node} has more than one parent line (cycle)")
            acyclic = False
        seen_child[ln.to_node] = k
    if len(f.lines) != n:
        problems.append(f"{len(f.lines)} lines for {n} nodes; a radial feeder needs exactly N")
    missing = [m for m in range(1, n + 1) if m not in seen_child]
    if missing:
        problems.append(f"nodes without a supplying line: {missing}")

    children: list[list[int]] = [[] for _ in range(n + 1)]
    for m, k in seen_child.items():
        ln = f.lines[k]
        if 0 <= ln.from_node <= n and ln.from_node != m:
            children[ln.from_node].append(m)
    depth = [-1] * (n + 1)
    depth[0] = 0
    order: list[int] = []
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in sorted(children[u]):
            if depth[v] != -1:
                acyclic = False
                continue
            depth[v] = depth[u] + 1
            order.append(v - 1)
            queue.append(v)
    unreached = [m for m in range(1, n + 1) if depth[m] == -1]
    connected = not unreached
    if unreached:
        problems.append(f"nodes not connected to the slack: {unreached}")
        # a node that has a parent but is unreachable sits on a cycle
        if any(m in seen_child for m in unreached):
            acyclic = False

    lateral_count = sum(max(len(c) - 1, 0) for c in children)
    slack_adj = tuple(sorted(children[0]))
    r = f.resistance
    zero_paths = []
    path_r = [0.0] * (n + 1)
    for i in order:
        par = f.lines[seen_child[i + 1]].from_node
        path_r[i + 1] = path_r[par] + r[i]
        if path_r[i + 1] <= 0.0:
            zero_paths.append(i + 1)
    if np.any(f.resistance < 0) or np.any(f.reactance < 0):
        problems.append("negative line impedance")

    ok = connected and acyclic and len(f.lines) == n and not problems
    return TopologyReport(
        ok=ok,
        connected=connected,
        acyclic=acyclic,
        depth=tuple(depth[1:]),
        lateral_count=lateral_count,
        slack_adjacent=slack_adj,
        single_root=len(slack_adj) == 1,
        zero_resistance_paths=tuple(zero_paths),
        bfs_order=tuple(order),
        problems=tuple(problems),
    )


@dataclass(frozen=True)
class SensitivityMatrices:
    """Common-path impedance matrices.

    ``R[m, n]`` is twice the resistance summed over the lines shared by the
    slack-to-m and slack-to-n paths (the factor 2 of the linear voltage
    equation is folded in), so linear voltage deviations read
    ``U0 - U = R @ p + X @ q``.
    """

    R: np.ndarray
    X: np.ndarray


def sensitivity_matrices(f: Feeder) -> SensitivityMatrices:
    n = f.node_count
    r_path = f.path_resistance
    x_path = np.zeros(n)
    R = np.zeros((n, n))
    X = np.zeros((n, n))
    for i in f.order:
        p = f.parent[i]
        x_path[i] = f.reactance[i] + (0.0 if p < 0 else x_path[p])
        if p >= 0:
            R[i, :] = R[p, :]
            X[i, :] = X[p, :]
        R[i, i] = 2.0 * r_path[i]
        X[i, i] = 2.0 * x_path[i]
        R[:, i] = R[i, :]
        X[:, i] = X[i, :]
    R.flags.writeable = False
    X.flags.writeable = False
    return SensitivityMatrices(R=R, X=X)


_SCHEMA_PATH = "feeder.schema.json"
FEEDER_SCHEMA: dict = json.loads(resources.files("doekit.data").joinpath(_SCHEMA_PATH).read_text())


def _label_key(label):
    return (0, label, "") if isinstance(label, int) else (1, 0, str(label))


def load_feeder(document: Mapping[str, Any] | str | os.PathLike) -> Feeder:
    """Build a :class:`Feeder` from a feeder document (mapping) or a JSON file path.

    File quantities (kV, kW, kvar, kVA, p.u.) are converted to SI. Node labels
    are re-indexed in breadth-first order from the slack, visiting siblings in
    label order.
    """
    if not isinstance(document, Mapping):
        with open(document) as fh:
            document = json.load(fh)
    validator = jsonschema.Draft202012Validator(FEEDER_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.path))
    if errors:
        diags = [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors]
        raise FeederError("feeder document violates the schema", diags)

    nodes = document["nodes"]
    lines = document["lines"]
    node_ids = [nd["id"] for nd in nodes]
    if len(set(node_ids)) != len(node_ids):
        raise FeederError("duplicate node ids")
    node_set = set(node_ids)
    to_ids = [ln["to"] for ln in lines]
    dup_children = sorted({t for t in to_ids if to_ids.count(t) > 1}, key=_label_key)
    if dup_children:
        raise FeederError(f"non-radial topology: nodes {dup_children} are supplied by more than one line (cycle)")
    for ln in lines:
        if ln["to"] not in node_set:
            raise FeederError(f"line {ln['from']}->{ln['to']} supplies an undeclared node")
    roots = {ln["from"] for ln in lines if ln["from"] not in node_set}
    if len(roots) != 1:
        raise FeederError(f"expected exactly one slack bus, found {sorted(map(str, roots))}")
    slack = roots.pop()
    if len(lines) != len(nodes):
        raise FeederError(f"{len(lines)} lines for {len(nodes)} nodes; a radial feeder needs exactly N")

    children: dict[Any, list] = {}
    by_child = {}
    for ln in lines:
        children.setdefault(ln["from"], []).append(ln["to"])
        by_child[ln["to"]] = ln
    index = {slack: 0}
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        for v in sorted(children.get(u, []), key=_label_key):
            if v in index:
                raise FeederError("non-radial topology: cycle detected")
            index[v] = len(index)
            queue.append(v)
    unreached = [nid for nid in node_ids if nid not in index]
    if unreached:
        raise FeederError(f"non-radial topology: nodes {unreached} are not connected to the slack")

    n = len(nodes)
    p = np.zeros(n)
    q = np.zeros(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for nd in nodes:
        i = index[nd["id"]] - 1
        p[i] = nd["p_kw"] * 1e3
        q[i] = nd["q_kvar"] * 1e3
        if nd.get("env_min_kw") is not None:
            lo[i] = nd["env_min_kw"] * 1e3
        if nd.get("env_max_kw") is not None:
            hi[i] = nd["env_max_kw"] * 1e3
    segs = []
    for nid in sorted(by_child, key=lambda c: index[c]):
        ln = by_child[nid]
        segs.append(LineSegment(index[ln["from"]], index[nid], float(ln["r_ohm"]), float(ln["x_ohm"])))

    vbase = document["base_voltage_kv"] * 1e3
    labels = [None] * (n + 1)
    for lab, i in index.items():
        labels[i] = str(lab)
    f = Feeder(
        lines=tuple(segs),
        base_load_p=p,
        base_load_q=q,
        slack_voltage=document.get("slack_voltage_pu", 1.0) * vbase,
        voltage_min=document["v_min_pu"] * vbase,
        voltage_max=document["v_max_pu"] * vbase,
        transformer_rating=document["transformer_kva"] * 1e3,
        envelope_lower=lo,
        envelope_upper=hi,
        base_voltage=vbase,
        name=document.get("name", "feeder"),
        labels=tuple(labels),
    )
    problems = check_physical(f)
    if problems:
        raise FeederError("non-physical feeder data", problems)
    return f


def check_physical(f: Feeder) -> list[str]:
    problems = []
    if not f.voltage_min < f.slack_voltage < f.voltage_max:
        problems.append("voltage bounds must satisfy v_min < slack voltage < v_max")
    if not f.transformer_rating > 0:
        problems.append("transformer rating must be positive")
    if np.any(f.resistance < 0) or np.any(f.reactance < 0):
        problems.append("line impedances must be non-negative")
    if np.any(f.envelope_lower > 0) or np.any(f.envelope_upper < 0):
        problems.append("envelope bounds must satisfy env_min <= 0 <= env_max")
    return problems


def feeder_to_document(f: Feeder) -> dict:
    """Inverse of :func:`load_feeder` (node ids are written as the 1..N integers)."""
    vb = f.base_voltage

    def num(v):
        return float(v)

    nodes = []
    for i in range(f.node_count):
        nd = {"id": i + 1, "p_kw": num(f.base_load_p[i] / 1e3), "q_kvar": num(f.base_load_q[i] / 1e3)}
        if np.isfinite(f.envelope_lower[i]):
            nd["env_min_kw"] = num(f.envelope_lower[i] / 1e3)
        if np.isfinite(f.envelope_upper[i]):
            nd["env_max_kw"] = num(f.envelope_upper[i] / 1e3)
        nodes.append(nd)
    return {
        "name": f.name,
        "base_voltage_kv": vb / 1e3,
        "slack_voltage_pu": f.slack_voltage / vb,
        "v_min_pu": f.voltage_min / vb,
        "v_max_pu": f.voltage_max / vb,
        "transformer_kva": f.transformer_rating / 1e3,
        "lines": [
            {"from": ln.from_node, "to": ln.to_node, "r_ohm": num(ln.resistance), "x_ohm": num(ln.reactance)}
            for ln in f.lines
        ],
        "nodes": nodes,
    }


def packaged_feeder(name: str) -> Feeder:
    """Load one of the feeders shipped in ``doekit/data`` (``feeder3``, ``feeder3_100kva``, ``belgian8``...)."""
    fname = name if name.endswith(".json") else f"{name}.json"
    doc = json.loads(resources.files("doekit.data").joinpath(fname).read_text())
    return load_feeder(doc)
