"""Command-line interface: ``doekit {validate,doe,batch,gen,bench}``.

Exit codes: 0 success, 1 invalid input file, 2 network limits already
violated by the base load, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .engines import ENGINES, run_engine
from .feeder import FeederError, feeder_to_document, load_feeder, validate_radial
from .lp import SolverError
from .powerflow import PowerFlowError, PreViolatedNetwork
from .report import render, run_all, write_atomic
from .results import CASES
from .series import SeriesError, read_series
from .synth import FeederSpec, generate_feeder, run_benchmark, sweep_specs

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INVALID", "EXIT_PREVIOLATED", "EXIT_SOLVER"]

log = logging.getLogger("doekit")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PREVIOLATED = 2
EXIT_SOLVER = 3

_EPILOG = "exit codes: 0 ok, 1 invalid input file, 2 pre-violated network, 3 solver failure"


def _engines(value: str) -> tuple[str, ...]:
    if value == "all":
        return tuple(ENGINES)
    names = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [n for n in names if n not in ENGINES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown engine(s) {bad}; choose from {sorted(ENGINES)} or 'all'")
    return names


def _cases(value: str) -> tuple[str, ...]:
    if value == "both":
        return CASES
    if value in CASES:
        return (value,)
    raise argparse.ArgumentTypeError("case must be import, export or both")


def _load(path: str):
    """Load a feeder file; returns ``(feeder, None)`` or ``(None, exit_code)``."""
    try:
        return load_feeder(path), None
    except FeederError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        for d in exc.diagnostics:
            print(f"  - {d}", file=sys.stderr)
        return None, EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return None, EXIT_INVALID


def _emit(text: str, output: str | None) -> None:
    if output:
        write_atomic(output, text)
    else:
        sys.stdout.write(text)


def cmd_validate(args) -> int:
    f, code = _load(args.feeder)
    if f is None:
        return code
    rep = validate_radial(f)
    info = {
        "ok": rep.ok,
        "nodes": f.node_count,
        "connected": rep.connected,
        "acyclic": rep.acyclic,
        "depth": {f.label(i + 1): d for i, d in enumerate(rep.depth)},
        "lateral_count": rep.lateral_count,
        "slack_adjacent": [f.label(m) for m in rep.slack_adjacent],
        "single_root": rep.single_root,
        "zero_resistance_paths": [f.label(m) for m in rep.zero_resistance_paths],
        "problems": list(rep.problems),
    }
    if args.format == "json":
        print(json.dumps(info, indent=2))
    else:
        for k, v in info.items():
            print(f"{k}: {v}")
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_doe(args) -> int:
    f, code = _load(args.feeder)
    if f is None:
        return code
    try:
        results = run_all(f, args.engine, args.case, args.tolerance)
    except PreViolatedNetwork as exc:
        print(f"error: pre-violated network: {exc.quantity} = {exc.value:.6g} ({exc})", file=sys.stderr)
        return EXIT_PREVIOLATED
    except (SolverError, PowerFlowError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _emit(render(f, results, args.format), args.output)
    return EXIT_OK


def _batch_step(f, series, k, engines, cases, tolerance, out_dir):
    ts = series.timestamps[k]
    fk = series.feeder_at(f, k)
    rows = []
    doc = {"timestamp": ts.isoformat(), "results": {}}
    for engine in engines:
        for case in cases:
            row = {"timestamp": ts.isoformat(), "engine": engine, "case": case, "combined_kw": 0.0,
                   "binding": "", "status": "", "warning": ""}
            try:
                res = run_engine(fk, engine, case, tolerance)
            except PreViolatedNetwork as exc:
                row.update(status="pre-violated", warning=f"{exc.quantity} = {exc.value:.6g}")
                doc["results"].setdefault(engine, {})[case] = {
                    "status": "pre-violated",
                    "envelopes_kw": {lab: 0.0 for lab in f.labels[1:]},
                    "combined_kw": 0.0,
                    "warning": str(exc),
                }
            except (SolverError, PowerFlowError) as exc:
                row.update(status="solver-failure", warning=str(exc))
                doc["results"].setdefault(engine, {})[case] = {"status": "solver-failure", "warning": str(exc)}
            else:
                row.update(combined_kw=res.combined / 1e3, binding=";".join(res.binding), status=res.status)
                doc["results"].setdefault(engine, {})[case] = res.to_dict()
            rows.append(row)
    name = f"step_{k:04d}_{ts.strftime('%Y%m%dT%H%M%S')}.json"
    write_atomic(os.path.join(out_dir, name), json.dumps(doc, indent=2) + "\n")
    return rows


def cmd_batch(args) -> int:
    f, code = _load(args.feeder)
    if f is None:
        return code
    try:
        series = read_series(args.series, f)
    except (SeriesError, OSError) as exc:
        print(f"error: {args.series}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for w in series.warnings:
        print(f"warning: {w}", file=sys.stderr)
    os.makedirs(args.out_dir, exist_ok=True)

    def job(k):
        return _batch_step(f, series, k, args.engine, args.case, args.tolerance, args.out_dir)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            per_step = list(pool.map(job, range(len(series))))
    else:
        per_step = [job(k) for k in range(len(series))]
    rows = [r for step in per_step for r in step]

    buf = io.StringIO()
    cols = ["timestamp", "engine", "case", "combined_kw", "binding", "status", "warning"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "combined_kw": f"{r['combined_kw']:.4f}"})
    write_atomic(os.path.join(args.out_dir, "summary.csv"), buf.getvalue())
    for r in rows:
        if r["warning"]:
            print(f"warning: {r['timestamp']} {r['engine']} {r['case']}: {r['status']}: {r['warning']}", file=sys.stderr)

    statuses = {r["status"] for r in rows}
    if statuses == {"pre-violated"}:
        return EXIT_PREVIOLATED
    if statuses <= {"pre-violated", "solver-failure"}:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        spec = FeederSpec(node_count=args.nodes, topology=args.topology, branching=args.branching, seed=args.seed)
        f = generate_feeder(spec)
    except (ValueError, FeederError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(json.dumps(feeder_to_document(f), indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.feeder:
        f, code = _load(args.feeder)
        if f is None:
            return code
        items = [f]
    else:
        if args.start < 1 or args.stop < args.start or args.step < 1:
            print("error: need 1 <= --from <= --to and --step >= 1", file=sys.stderr)
            return EXIT_INVALID
        items = sweep_specs(args.start, args.stop, args.step, topology=args.topology, seed=args.seed)
    report = run_benchmark(items, engines=args.engine, repetitions=args.repetitions, cases=args.case)
    buf = io.StringIO()
    report.write_csv(buf)
    _emit(buf.getvalue(), args.output)
    for (topo, engine, case), ms in sorted(report.summary().items()):
        log.info("median %s %s %s: %.2f ms", topo, engine, case, ms)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doekit", description="Dynamic operating envelopes for radial feeders.",
                                     epilog=_EPILOG)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a feeder file and describe its topology", epilog=_EPILOG)
    p.add_argument("feeder")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("doe", help="compute envelopes for one snapshot", epilog=_EPILOG)
    p.add_argument("feeder")
    p.add_argument("--engine", type=_engines, default=_engines("all"), help="lace, lp, nlp, a comma list or all")
    p.add_argument("--case", type=_cases, default=CASES, help="import, export or both")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--tolerance", type=float, default=None, help="NLP feasibility tolerance (relative)")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_doe)

    p = sub.add_parser("batch", help="compute envelopes for every step of a load series", epilog=_EPILOG)
    p.add_argument("feeder")
    p.add_argument("series", help="CSV with timestamp,node_id,p_kw,q_kvar")
    p.add_argument("--engine", type=_engines, default=_engines("lace"))
    p.add_argument("--case", type=_cases, default=CASES)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1, help="time steps processed concurrently")
    p.add_argument("-o", "--out-dir", required=True)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("gen", help="generate a synthetic feeder file", epilog=_EPILOG)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--topology", choices=("chain", "tree"), default="chain")
    p.add_argument("--branching", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="time engines on a sweep of synthetic feeders", epilog=_EPILOG)
    p.add_argument("--from", dest="start", type=int, default=2)
    p.add_argument("--to", dest="stop", type=int, default=1002)
    p.add_argument("--step", type=int, default=10)
    p.add_argument("--topology", choices=("chain", "tree"), default="chain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--engine", type=_engines, default=("lace", "lp"))
    p.add_argument("--case", type=_cases, default=CASES)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--feeder", help="benchmark this feeder file instead of a synthetic sweep")
    p.add_argument("-o", "--output", help="CSV path (stdout if omitted)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
