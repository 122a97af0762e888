"""Acceptance checks, one test per criterion.

Each test prints a single ``[criterion k] PASS|FAIL ...`` line (visible even
under output capture) and then asserts. Run the file directly for the
summary alone::

    python3 tests/test_acceptance.py
"""
from __future__ import annotations

import logging
import sys
import time

import numpy as np
import pytest

from doekit.feeder import packaged_feeder, sensitivity_matrices
from doekit.lace import run_lace
from doekit.lp import assemble_lp, run_lp_doe
from doekit.nlp import ac_violation, oracle_bisect, oracle_grid, run_nlp_doe
from doekit.powerflow import solve_ac_batch, solve_linear, spare_capacity
from doekit.simplex import solve_simplex
from doekit.synth import FeederSpec, generate_feeder, run_benchmark, sweep_specs

log = logging.getLogger("doekit.acceptance")

ENGINES = {"lace": run_lace, "lp": run_lp_doe, "nlp": run_nlp_doe}
CASES = ("import", "export")
_printer = None


def _report(k: int, ok: bool, detail: str) -> None:
    line = f"[criterion {k}] {'PASS' if ok else 'FAIL'} {detail}"
    if _printer is not None:
        with _printer.disabled():
            print(line)
    else:
        print(line)


@pytest.fixture(autouse=True)
def _console(capsys):
    global _printer
    _printer = capsys
    yield
    _printer = None


class Checks:
    """Collects named checks so one line can summarise a criterion."""

    def __init__(self):
        self.failed: list[str] = []
        self.count = 0

    def __call__(self, name: str, ok: bool, got=None) -> None:
        self.count += 1
        if not ok:
            self.failed.append(name if got is None else f"{name}={got}")

    @property
    def ok(self) -> bool:
        return not self.failed

    def detail(self, extra: str = "") -> str:
        head = f"{self.count - len(self.failed)}/{self.count} checks"
        tail = f"; failed: {', '.join(self.failed)}" if self.failed else ""
        return f"{head}{'; ' + extra if extra else ''}{tail}"


def _near(value: float, target: float, tol: float) -> bool:
    return abs(value - target) <= tol + 1e-12


def test_criterion_1_three_node_20kva():
    f = packaged_feeder("feeder3")
    c = Checks()
    t0 = time.perf_counter()
    out = {(e, case): fn(f, case) for e, fn in ENGINES.items() for case in CASES}
    elapsed = time.perf_counter() - t0

    imp, exp = out["lace", "import"], out["lace", "export"]
    c("lace import", _near(imp.combined / 1e3, 10.0, 0.1), round(imp.combined / 1e3, 3))
    c("lace export", _near(exp.combined / 1e3, -29.2, 0.1), round(exp.combined / 1e3, 3))
    c("lace ac vmin", _near(imp.ac_v_min_pu, 0.947, 0.002), round(imp.ac_v_min_pu, 4))
    c("lace ac vmax", _near(exp.ac_v_max_pu, 1.033, 0.002), round(exp.ac_v_max_pu, 4))
    c("lace |S01| import", _near(abs(imp.s01_kva), 20.0, 0.1), round(imp.s01_kva, 3))
    c("lace |S01| export", _near(abs(exp.s01_kva), 20.0, 0.1), round(exp.s01_kva, 3))
    for case, target in (("import", 10.0), ("export", -29.2)):
        lp = out["lp", case]
        c(f"lp {case}", _near(lp.combined / 1e3, target, 0.1), round(lp.combined / 1e3, 3))
        c(f"lp {case} degenerate", bool(lp.diagnostics["degenerate"]))
    nimp, nexp = out["nlp", "import"], out["nlp", "export"]
    c("nlp import p1", _near(nimp.envelopes_kw[0], 9.1, 0.2), round(nimp.envelopes_kw[0], 3))
    c("nlp export p2", _near(nexp.envelopes_kw[1], -30.8, 0.4), round(nexp.envelopes_kw[1], 3))
    c("nlp export vmax", _near(nexp.v_max_pu, 1.076, 0.005), round(nexp.v_max_pu, 4))
    c("runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f}s")

    _report(1, c.ok, c.detail(f"runtime {elapsed:.3f} s"))
    assert c.ok, c.failed


def test_criterion_2_three_node_100kva():
    f = packaged_feeder("feeder3_100kva")
    c = Checks()
    targets = {"import": (32.8, 0.900, 42.6), "export": (-67.1, 1.100, -57.7)}
    for engine in ("lace", "lp"):
        for case, (p1, v, s01) in targets.items():
            res = ENGINES[engine](f, case)
            kw = res.envelopes_kw
            c(f"{engine} {case} p1", _near(kw[0], p1, 0.1), round(kw[0], 3))
            c(f"{engine} {case} p2", abs(kw[1]) <= 1e-6, kw[1])
            vext = res.v_min_pu if case == "import" else res.v_max_pu
            c(f"{engine} {case} V", _near(vext, v, 0.001), round(vext, 5))
            c(f"{engine} {case} S01", _near(res.s01_kva, s01, 0.1), round(res.s01_kva, 3))
    for case in CASES:
        a, b = run_lace(f, case).envelopes, run_lp_doe(f, case).envelopes
        c(f"lace == lp {case}", np.allclose(a, b, rtol=1e-9, atol=1e-9))
    for case, target in (("import", 30.4), ("export", -70.9)):
        res = run_nlp_doe(f, case)
        c(f"nlp {case}", _near(res.combined / 1e3, target, 0.4), round(res.combined / 1e3, 3))

    _report(2, c.ok, c.detail())
    assert c.ok, c.failed


def test_criterion_3_forced_allocation():
    f = packaged_feeder("feeder3_100kva")
    forced = f.exclude_nodes([1])
    c = Checks()
    ratios = []
    for engine, fn in ENGINES.items():
        for case in CASES:
            full = fn(f, case).combined
            res = fn(forced, case)
            ratio = res.combined / full
            ratios.append(ratio)
            c(f"{engine} {case} node1 zero", res.envelopes[0] == 0.0)
            c(f"{engine} {case} ratio", 0.45 <= ratio <= 0.55, f"{ratio:.3f}")

    _report(3, c.ok, c.detail(f"ratios {min(ratios):.3f}..{max(ratios):.3f}"))
    assert c.ok, c.failed


def test_criterion_4_oracle_equivalence():
    c = Checks()
    worst_grid = worst_bisect = 0.0
    for name, regime in (("feeder3", "thermal"), ("feeder3_100kva", "voltage")):
        f = packaged_feeder(name)
        for case in CASES:
            nlp = run_nlp_doe(f, case)
            grid = oracle_grid(f, case, resolution=100.0)
            gap = abs(nlp.combined - grid.combined) / 1e3
            worst_grid = max(worst_grid, gap)
            c(f"grid {regime} {case}", gap <= 0.2, f"{gap:.3f}")
            # single-node NLP optima: every non-zero entry is the node's solo limit
            active = np.flatnonzero(np.abs(nlp.envelopes) > 1.0)
            c(f"nlp single-node {regime} {case}", len(active) == 1, list(active + 1))
            for m in active:
                b = oracle_bisect(f, int(m) + 1, case)
                d = abs(b.value - nlp.envelopes[m]) / 1e3
                worst_bisect = max(worst_bisect, d)
                c(f"bisect {regime} {case} node{m + 1}", d <= 0.1, f"{d:.4f}")

    _report(4, c.ok, c.detail(f"max grid gap {worst_grid:.3f} kW, max bisect gap {worst_bisect:.4f} kW"))
    assert c.ok, c.failed


# ---- criterion 5 ---------------------------------------------------------

def _support(p: np.ndarray) -> set[int]:
    a = np.abs(p)
    return set((np.flatnonzero(a > 0.01 * a.sum() + 1.0) + 1).tolist())


def _weighted_depth(f, p: np.ndarray) -> float:
    a = np.abs(p)
    return float(a @ f.depth / a.sum())


def _regime(res) -> str:
    voltage = any(b.startswith("voltage") for b in res.binding)
    if "thermal" in res.binding and not voltage:
        return "thermal"
    if voltage and "thermal" not in res.binding:
        return "voltage"
    return "mixed"


def _reorder_invariant(f, case) -> tuple[bool, bool]:
    prob = assemble_lp(f, case)
    a = solve_simplex(prob)
    perm = np.arange(f.node_count)[::-1]
    b = solve_simplex(prob.permuted(perm))
    x_back = np.empty_like(b.x)
    x_back[perm] = b.x
    same_obj = abs(a.objective - b.objective) <= 1e-9 * max(abs(a.objective), 1.0)
    return same_obj, not np.allclose(a.x, x_back)


def _min_depth_share(f, p) -> float:
    a = np.abs(p)
    participating = (f.envelope_lower < 0) | (f.envelope_upper > 0)
    shallowest = f.depth == f.depth[participating].min()
    return float(a[shallowest & participating].sum() / a.sum())


def _thermal_properties(f) -> dict[str, bool]:
    out = {}
    for case in CASES:
        out[f"lp reorder {case}"] = _reorder_invariant(f, case)[0]
    imp, exp = run_nlp_doe(f, "import"), run_nlp_doe(f, "export")
    out["nlp import shallow"] = _min_depth_share(f, imp.envelopes) >= 0.9
    out["nlp export deeper"] = _weighted_depth(f, exp.envelopes) > _weighted_depth(f, imp.envelopes)
    return out


def _voltage_properties(f) -> dict[str, bool]:
    upstream = set((f.slack_adjacent + 1).tolist())
    out = {}
    for engine, fn in ENGINES.items():
        for case in CASES:
            s = _support(fn(f, case).envelopes)
            out[f"{engine} upstream {case}"] = bool(s) and s <= upstream
    return out


def _qualifies(f, regime: str) -> bool:
    engines = (run_lp_doe, run_nlp_doe)
    return all(_regime(fn(f, case)) == regime for fn in engines for case in CASES)


def _instances(regime: str, wanted: int):
    """Seeded random chains whose LP and NLP optima bind only ``regime`` limits."""
    rng = np.random.default_rng(5 if regime == "thermal" else 6)
    seed, found = 0, 0
    while found < wanted:
        seed += 1
        n = int(rng.integers(2, 6))
        if regime == "thermal":
            spec = FeederSpec(n, seed=seed, transformer_factor=1.3, voltage_budget=0.3)
        else:
            spec = FeederSpec(n, seed=10_000 + seed, transformer_factor=30.0, voltage_budget=0.5)
        f = generate_feeder(spec)
        if _qualifies(f, regime):
            found += 1
            yield spec.feeder_id, f
        if seed > 5 * wanted:
            raise RuntimeError(f"could not find {wanted} {regime}-bound instances")


def test_criterion_5_property_suite():
    per_property: dict[str, list[int]] = {}
    failures: list[str] = []
    reordered = 0
    for regime, check in (("thermal", _thermal_properties), ("voltage", _voltage_properties)):
        for fid, f in _instances(regime, 200):
            for name, ok in check(f).items():
                tally = per_property.setdefault(f"{regime}: {name}", [0, 0])
                tally[0] += ok
                tally[1] += 1
                if not ok:
                    failures.append(f"{fid} {name}")
            if regime == "thermal":
                reordered += _reorder_invariant(f, "import")[1]
    for msg in failures:
        log.warning("property failure: %s", msg)
    rates = {k: v[0] / v[1] for k, v in per_property.items()}
    random_ok = all(r >= 0.95 for r in rates.values())

    packaged = {"feeder3": _thermal_properties, "belgian8": _thermal_properties, "feeder3_100kva": _voltage_properties}
    packaged_fail = [
        f"{name} {prop}"
        for name, check in packaged.items()
        for prop, ok in check(packaged_feeder(name)).items()
        if not ok
    ]
    ok = random_ok and not packaged_fail and reordered > 0
    worst = min(rates, key=rates.get)
    detail = (
        f"{len(rates)} properties on 200 instances per regime, lowest {worst} {rates[worst]:.1%}; "
        f"{len(failures)} instance failures logged; allocation moved under reordering in {reordered}/200; "
        f"packaged feeders {'all hold' if not packaged_fail else 'failed: ' + ', '.join(packaged_fail)}"
    )
    _report(5, ok, detail)
    assert ok, (rates, packaged_fail, failures)


# ---- criterion 6 ---------------------------------------------------------

def _random_spec(rng, k: int) -> FeederSpec:
    n = int(rng.integers(1, 9))
    kw = {}
    if rng.random() < 0.3:
        kw = dict(envelope_lower=-float(rng.uniform(2e3, 30e3)), envelope_upper=float(rng.uniform(2e3, 30e3)))
    return FeederSpec(
        n,
        topology=str(rng.choice(["chain", "tree"])),
        transformer_factor=float(rng.uniform(1.1, 20.0)),
        voltage_budget=float(rng.uniform(0.2, 0.8)),
        seed=k,
        **kw,
    )


def _linear_excess(f, p) -> float:
    st = solve_linear(f, p)
    excess = [
        st.feeder_head_s / f.transformer_rating - 1.0,
        np.max(f.u_min - st.u) / f.u_min,
        np.max(st.u - f.u_max) / f.u_max,
    ]
    return float(max(excess))


@pytest.mark.slow
def test_criterion_6_feasibility_sweep():
    rng = np.random.default_rng(2024)
    tol = 1e-6
    worst = {e: -np.inf for e in ENGINES}
    bad: list[str] = []
    ac_loss_blind = {"lace": 0, "lp": 0}
    runs = 0
    for k in range(1000):
        f = generate_feeder(_random_spec(rng, k))
        for engine, fn in ENGINES.items():
            for case in CASES:
                res = fn(f, case)
                p = np.asarray(res.envelopes)
                box = np.all(p >= f.envelope_lower - tol * np.abs(f.envelope_lower)) and np.all(
                    p <= f.envelope_upper + tol * np.abs(f.envelope_upper)
                )
                ac = solve_ac_batch(f, p[None, :])
                ac_v = float(ac_violation(f, ac)[0]) if ac.converged[0] else np.inf
                if engine == "nlp":
                    v = ac_v
                else:
                    v = _linear_excess(f, p)
                    ac_loss_blind[engine] += ac_v > tol
                worst[engine] = max(worst[engine], v)
                runs += 1
                if v > tol or not box:
                    bad.append(f"feeder {k} {engine} {case} excess {v:.3g}")
    for msg in bad:
        log.warning("feasibility failure: %s", msg)
    ok = not bad
    detail = (
        f"{runs} runs, {len(bad)} violations > 1e-6; worst relative excess "
        + ", ".join(f"{e} {w:.2e}" for e, w in worst.items())
        + f"; informational AC violations of linear engines: lace {ac_loss_blind['lace']}, lp {ac_loss_blind['lp']}"
    )
    _report(6, ok, detail)
    assert ok, bad[:10]


# ---- criterion 7 ---------------------------------------------------------

def test_criterion_7_scalability(tmp_path):
    specs = sweep_specs(10, 1000, 10, topology="chain", seed=0)
    report = run_benchmark(specs, engines=("lace", "lp"), repetitions=1)
    pairs = {(r.n_nodes, r.engine): r.time_ms / 1e3 for r in report.select(case="import+export")}
    sizes = sorted({n for n, _ in pairs})
    lace_max = max(pairs[n, "lace"] for n in sizes)
    lp_1000 = pairs[1000, "lp"]
    big = [n for n in sizes if n >= 500]
    med_lace = float(np.median([pairs[n, "lace"] for n in big]))
    med_lp = float(np.median([pairs[n, "lp"] for n in big]))
    path = tmp_path / "scaling.csv"
    report.to_csv(path)
    n_rows = len(path.read_text().strip().splitlines()) - 1
    errors = [r for r in report.rows if r.status.startswith("error")]

    c = Checks()
    c("sizes", sizes == list(range(10, 1001, 10)), len(sizes))
    c("lace pair < 1 s", lace_max < 1.0, f"{lace_max:.3f}")
    c("lp < 30 s at N=1000", lp_1000 < 30.0, f"{lp_1000:.3f}")
    c("median lace < lp (N>=500)", med_lace < med_lp, f"{med_lace:.3f}/{med_lp:.3f}")
    c("csv rows > 100", n_rows > 100, n_rows)
    c("no errors", not errors, len(errors))
    detail = c.detail(
        f"slowest LACE pair {lace_max:.3f} s, LP pair at N=1000 {lp_1000:.3f} s, "
        f"median N>=500 LACE {med_lace:.3f} s vs LP {med_lp:.3f} s, {n_rows} CSV rows"
    )
    _report(7, c.ok, detail)
    assert c.ok, c.failed


# ---- criterion 8 ---------------------------------------------------------

def test_criterion_8_linear_voltage_identity():
    rng = np.random.default_rng(8)
    worst = 0.0
    for k in range(100):
        spec = FeederSpec(
            int(rng.integers(1, 60)),
            topology=str(rng.choice(["chain", "tree"])),
            seed=k,
        )
        f = generate_feeder(spec)
        sc = spare_capacity(f)
        S = sensitivity_matrices(f)
        p = rng.uniform(-20e3, 20e3, f.node_count)
        predicted = S.R @ p + sc.e_tilde
        flow = f.u0 - solve_linear(f, p).u
        rel = float(np.max(np.abs(predicted - flow)) / np.max(np.abs(flow)))
        worst = max(worst, rel)
    ok = worst <= 1e-9
    _report(8, ok, f"100 feeder/injection pairs, max relative deviation {worst:.2e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider", *sys.argv[1:]]))
