"""Synthetic radial feeders and wall-clock benchmarks of the envelope engines."""

from __future__ import annotations

import csv
import math
import os
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .engines import run_engine
from .feeder import Feeder, FeederError, LineSegment, validate_radial
from .powerflow import PreViolatedNetwork, solve_linear, spare_capacity
from .results import CASES

__all__ = [
    "FeederSpec",
    "generate_feeder",
    "BenchRow",
    "BenchReport",
    "run_benchmark",
    "sweep_specs",
    "BENCH_COLUMNS",
]

BENCH_COLUMNS = ("feeder_id", "n_nodes", "topology", "engine", "case", "time_ms", "combined_kw", "status")
TOPOLOGIES = ("chain", "tree")


@dataclass(frozen=True)
class FeederSpec:
    """Recipe for a random radial feeder.

    Impedances are in ohm and loads in W/var. Each line draws ``r`` uniformly
    from ``r_range``; ``x`` is ``x_ratio * r`` unless ``x_range`` is given.
    Reactive load follows ``power_factor`` (lagging) unless ``q_range`` is
    given. The transformer is rated ``transformer_factor`` times the aggregate
    base apparent load unless ``transformer_rating`` fixes it.

    When the base-case voltage drop would use more than ``voltage_budget`` of
    the allowed drop, all impedances are scaled down uniformly so that it uses
    exactly that share; long chains would otherwise start out of bounds. Set
    ``voltage_budget=None`` to disable.

    For trees, every node receives ``1 + Poisson(branching - 1)`` children in
    breadth-first order until ``node_count`` nodes exist.
    """

    node_count: int
    topology: str = "chain"
    branching: float = 3.0
    r_range: tuple[float, float] = (0.02, 0.15)
    x_ratio: float = 0.5
    x_range: tuple[float, float] | None = None
    p_range: tuple[float, float] = (1e3, 6e3)
    power_factor: float = 0.95
    q_range: tuple[float, float] | None = None
    transformer_factor: float = 1.3
    transformer_rating: float | None = None
    envelope_lower: float = -math.inf
    envelope_upper: float = math.inf
    voltage_budget: float | None = 0.5
    slack_voltage: float = 230.0
    voltage_min: float = 207.0
    voltage_max: float = 253.0
    seed: int = 0

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be at least 1")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if self.topology == "tree" and self.branching < 1:
            raise ValueError("branching must be >= 1")

    @property
    def feeder_id(self) -> str:
        return f"{self.topology}-{self.node_count}-s{self.seed}"


def _parents(spec: FeederSpec, rng: np.random.Generator) -> list[int]:
    n = spec.node_count
    if spec.topology == "chain":
        return list(range(n))
    parents = [0]
    queue = deque([1])
    nxt = 2
    while nxt <= n:
        par = queue.popleft()
        for _ in range(1 + rng.poisson(spec.branching - 1.0)):
            if nxt > n:
                break
            parents.append(par)
            queue.append(nxt)
            nxt += 1
    return parents


def generate_feeder(spec: FeederSpec) -> Feeder:
    """Draw a feeder from ``spec``; identical specs give identical feeders."""
    rng = np.random.default_rng(spec.seed)
    n = spec.node_count
    parents = _parents(spec, rng)
    r = rng.uniform(*spec.r_range, size=n)
    x = rng.uniform(*spec.x_range, size=n) if spec.x_range is not None else spec.x_ratio * r
    p = rng.uniform(*spec.p_range, size=n)
    if spec.q_range is not None:
        q = rng.uniform(*spec.q_range, size=n)
    else:
        q = p * math.tan(math.acos(spec.power_factor))

    def build(r, x, rating):
        return Feeder(
            lines=tuple(LineSegment(parents[i], i + 1, float(r[i]), float(x[i])) for i in range(n)),
            base_load_p=p,
            base_load_q=q,
            slack_voltage=spec.slack_voltage,
            voltage_min=spec.voltage_min,
            voltage_max=spec.voltage_max,
            transformer_rating=rating,
            envelope_lower=np.full(n, spec.envelope_lower),
            envelope_upper=np.full(n, spec.envelope_upper),
            name=spec.feeder_id,
        )

    if spec.transformer_rating is not None:
        rating = float(spec.transformer_rating)
    else:
        rating = float(spec.transformer_factor * math.hypot(p.sum(), q.sum()))
        if rating <= 0:
            raise FeederError("transformer sizing rule gives a non-positive rating for a zero-load feeder")
    f = build(r, x, rating)
    if spec.voltage_budget is not None:
        drop = f.u0 - solve_linear(f, np.zeros(n)).u
        allowed = spec.voltage_budget * (f.u0 - f.u_min)
        if drop.max() > allowed:
            scale = allowed / drop.max()
            f = build(r * scale, x * scale, rating)
    try:
        spare_capacity(f)
    except PreViolatedNetwork as exc:
        raise FeederError(f"sizing rule leaves the base case infeasible: {exc}") from exc
    if not validate_radial(f).ok:
        raise FeederError("generated feeder is not radial")
    return f


def sweep_specs(start: int, stop: int, step: int, topology: str = "chain", seed: int = 0, **kwargs) -> list[FeederSpec]:
    """One spec per node count in ``range(start, stop + 1, step)``."""
    return [
        FeederSpec(node_count=n, topology=topology, seed=seed + k, **kwargs)
        for k, n in enumerate(range(start, stop + 1, step))
    ]


@dataclass(frozen=True)
class BenchRow:
    feeder_id: str
    n_nodes: int
    topology: str
    engine: str
    case: str
    time_ms: float
    combined_kw: float
    status: str

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in BENCH_COLUMNS)


@dataclass
class BenchReport:
    """Per (feeder, engine, case) timings; ``case`` also takes ``import+export``."""

    rows: list[BenchRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def select(self, engine: str | None = None, case: str | None = None, topology: str | None = None) -> list[BenchRow]:
        return [
            r
            for r in self.rows
            if (engine is None or r.engine == engine)
            and (case is None or r.case == case)
            and (topology is None or r.topology == topology)
        ]

    def summary(self) -> dict[tuple[str, str, str], float]:
        """Median time in ms per (topology, engine, case)."""
        groups: dict[tuple[str, str, str], list[float]] = {}
        for r in self.rows:
            groups.setdefault((r.topology, r.engine, r.case), []).append(r.time_ms)
        return {k: float(np.median(v)) for k, v in groups.items()}

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for r in self.rows:
            combined = "" if math.isnan(r.combined_kw) else f"{r.combined_kw:.6f}"
            w.writerow([r.feeder_id, r.n_nodes, r.topology, r.engine, r.case, f"{r.time_ms:.3f}", combined, r.status])


def _topology_of(f: Feeder) -> str:
    return "chain" if validate_radial(f).lateral_count == 0 else "tree"


def run_benchmark(
    items: Iterable[FeederSpec | Feeder],
    engines: Sequence[str] = ("lace", "lp"),
    repetitions: int = 1,
    cases: Sequence[str] = CASES,
) -> BenchReport:
    """Time every engine on every feeder and case.

    Feeders are generated before the clock starts. The reported time is the
    median over ``repetitions``. A failing cell is recorded with status
    ``error:<ExceptionName>`` and the run moves on. Each (feeder, engine) also
    gets an ``import+export`` row whose time is the sum of the two cases.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    report = BenchReport()
    for item in items:
        if isinstance(item, FeederSpec):
            f, fid, topo = generate_feeder(item), item.feeder_id, item.topology
        else:
            f, fid, topo = item, item.name, _topology_of(item)
        for engine in engines:
            pair_time, pair_ok = 0.0, True
            for case in cases:
                times = []
                combined, status = math.nan, "ok"
                for _ in range(repetitions):
                    t0 = time.perf_counter()
                    try:
                        res = run_engine(f, engine, case)
                    except Exception as exc:  # recorded per cell
                        times.append((time.perf_counter() - t0) * 1e3)
                        status = f"error:{type(exc).__name__}"
                        break
                    times.append((time.perf_counter() - t0) * 1e3)
                    combined, status = res.combined / 1e3, res.status
                t_ms = float(np.median(times))
                pair_time += t_ms
                pair_ok = pair_ok and not status.startswith("error")
                report.rows.append(BenchRow(fid, f.node_count, topo, engine, case, t_ms, combined, status))
            if len(cases) == 2:
                report.rows.append(
                    BenchRow(fid, f.node_count, topo, engine, "import+export", pair_time, math.nan,
                             "ok" if pair_ok else "error")
                )
    return report
