"""Exact vs aggregated comparisons and the client/server reproduction table."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np

from .analysis import check_aggregation_condition, classify, partition_groups, reduce
from .measures import Measure
from .solvers import boundary_probability, chain_sums, steady_state
from .statespace import DEFAULT_STATE_CAP, generate_ctmc
from .syntax import GroupedModel, PepaError, load_model
from .verify import boundary_states, partition_subchains

log = logging.getLogger(__name__)

EXACT, APPROX, BOTH = "exact", "approx", "both"


class ConditionFailed(PepaError):
    def __init__(self, report):
        super().__init__(f"aggregation condition fails: {len(report.violations)} violation(s)")
        self.report = report


class ToleranceBreach(PepaError):
    def __init__(self, cells):
        super().__init__(f"{len(cells)} cell(s) outside tolerance")
        self.cells = cells


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    model_path: str
    overrides: Mapping[str, Sequence[float]] = dataclasses.field(default_factory=dict)
    measures: Sequence[Measure] = ()
    mode: str = BOTH
    zipped: bool = False

    def cases(self) -> list[dict]:
        names = sorted(self.overrides)
        if not names:
            return [{}]
        columns = [list(self.overrides[n]) for n in names]
        if self.zipped:
            if len({len(c) for c in columns}) != 1:
                raise ValueError("zipped overrides need value lists of equal length")
            combos = zip(*columns)
        else:
            combos = itertools.product(*columns)
        return [dict(zip(names, c)) for c in combos]


@dataclasses.dataclass(frozen=True)
class ComparisonRow:
    measure: str
    exact: Optional[float]
    approximate: Optional[float]

    @property
    def error_pct(self) -> Optional[float]:
        if self.exact is None or self.approximate is None or self.exact == 0:
            return None
        return 100.0 * abs(self.approximate - self.exact) / self.exact


@dataclasses.dataclass
class CaseResult:
    overrides: dict
    rows: list[ComparisonRow]
    boundary_probability: Optional[float] = None
    full_states: Optional[int] = None
    aggregated_states: Optional[int] = None
    exact_seconds: float = 0.0
    approx_seconds: float = 0.0


def _measure_values(measures, layout, labels, probs) -> list[float]:
    out = []
    for m in measures:
        pred = m.compile(layout)
        out.append(float(sum(p for lab, p in zip(labels, probs) if pred(lab))))
    return out


def run_case(model: GroupedModel, measures: Sequence[Measure], mode: str = BOTH,
             threshold: Optional[int] = None, state_cap: int = DEFAULT_STATE_CAP) -> CaseResult:
    """Solve the aggregated and/or full chain and evaluate the measures on both."""
    partition = partition_groups(model, threshold)
    report = check_aggregation_condition(model, partition)
    if not report.satisfied:
        raise ConditionFailed(report)
    result = CaseResult({}, [])
    approx = exact = [None] * len(measures)

    if mode in (APPROX, BOTH):
        t0 = time.perf_counter()
        agg = generate_ctmc(reduce(model, partition), state_cap=state_cap)
        pi = steady_state(agg)
        labels = [agg.state(i) for i in range(agg.size)]
        approx = _measure_values(measures, agg.layout, labels, pi.probs)
        result.approx_seconds = time.perf_counter() - t0
        result.aggregated_states = agg.size

    if mode in (EXACT, BOTH):
        t0 = time.perf_counter()
        full = generate_ctmc(model, state_cap=state_cap)
        pi = steady_state(full)
        cls = classify(model, partition)
        small = full.layout.sub_layout(partition.small)
        chains = partition_subchains(full, cls, small)
        sums = chain_sums(pi, chains.chain_index, chains.count)
        exact = _measure_values(measures, small, chains.keys, sums)
        boundary = boundary_states(full, model, partition, chains, cls)
        result.boundary_probability = boundary_probability(pi, boundary)
        result.exact_seconds = time.perf_counter() - t0
        result.full_states = full.size

    result.rows = [ComparisonRow(m.name, e, a) for m, e, a in zip(measures, exact, approx)]
    return result


def _run_one(args):
    path, overrides, measures, mode, threshold, state_cap = args
    model = load_model(path).with_rates(overrides) if overrides else load_model(path)
    res = run_case(model, measures, mode, threshold, state_cap)
    res.overrides = dict(overrides)
    return res


def run_cases(path, cases: Sequence[Mapping[str, float]], measures, mode=BOTH, threshold=None,
              state_cap=DEFAULT_STATE_CAP, jobs: Optional[int] = None) -> list[CaseResult]:
    """Run cases in parallel processes; results come back in case order."""
    work = [(str(path), dict(c), list(measures), mode, threshold, state_cap) for c in cases]
    jobs = jobs or min(len(work), os.cpu_count() or 1)
    if jobs <= 1 or len(work) <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


def cmd_compare(spec: ExperimentSpec, threshold=None, state_cap=DEFAULT_STATE_CAP, jobs=None) -> list[CaseResult]:
    return run_cases(spec.model_path, spec.cases(), spec.measures, spec.mode, threshold, state_cap, jobs)


# ---------------------------------------------------------------------------
# output

def _fmt(x: Optional[float]) -> str:
    return "N/A" if x is None else repr(float(x))


def rows_csv(results: Sequence[CaseResult]) -> str:
    names = sorted({k for r in results for k in r.overrides})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", *names, "measure", "exact", "approximate", "error_pct"])
    for i, res in enumerate(results, 1):
        for row in res.rows:
            w.writerow([i, *[res.overrides.get(n, "") for n in names], row.measure,
                        _fmt(row.exact), _fmt(row.approximate), _fmt(row.error_pct)])
    return buf.getvalue()


def boundary_csv(results: Sequence[CaseResult]) -> str:
    names = sorted({k for r in results for k in r.overrides})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", *names, "boundary_probability"])
    for i, res in enumerate(results, 1):
        w.writerow([i, *[res.overrides.get(n, "") for n in names], _fmt(res.boundary_probability)])
    return buf.getvalue()


def results_json(results: Sequence[CaseResult]) -> str:
    out = []
    for i, res in enumerate(results, 1):
        out.append({
            "case": i,
            "overrides": res.overrides,
            "full_states": res.full_states,
            "aggregated_states": res.aggregated_states,
            "boundary_probability": res.boundary_probability,
            "rows": [{"measure": r.measure, "exact": r.exact, "approximate": r.approximate,
                      "error_pct": r.error_pct} for r in res.rows],
        })
    return json.dumps(out, indent=2, sort_keys=True) + "\n"


def render_table(results: Sequence[CaseResult]) -> str:
    """Fixed-width table at three decimals."""
    lines = []
    for i, res in enumerate(results, 1):
        params = ", ".join(f"{k}={v:g}" for k, v in sorted(res.overrides.items()))
        lines.append(f"case {i}" + (f" ({params})" if params else ""))
        lines.append(f"  {'measure':<12}{'exact':>10}{'approx':>10}{'error %':>10}")
        for r in res.rows:
            e = "-" if r.exact is None else f"{r.exact:.3f}"
            a = "-" if r.approximate is None else f"{r.approximate:.3f}"
            p = "N/A" if r.error_pct is None else f"{r.error_pct:.1f}"
            lines.append(f"  {r.measure:<12}{e:>10}{a:>10}{p:>10}")
        if res.boundary_probability is not None:
            lines.append(f"  boundary probability {res.boundary_probability:.6g}")
    return "\n".join(lines) + "\n"


GNUPLOT = """set terminal pngcairo size 640,480
set output 'boundary.png'
set datafile separator ','
set xlabel 'case'
set ylabel 'P(boundary)'
set key off
plot 'boundary.csv' using 1:{col} every ::1 with linespoints
"""


def gnuplot_script(results: Sequence[CaseResult]) -> str:
    names = sorted({k for r in results for k in r.overrides})
    return GNUPLOT.format(col=len(names) + 2)


# ---------------------------------------------------------------------------
# client/server table

TABLE1_MEASURES = (
    Measure("P<5,0,0>", "S_idle == 5 and S_log == 0 and S_broken == 0"),
    Measure("P<3,1,1>", "S_idle == 3 and S_log == 1 and S_broken == 1"),
    Measure("P<0,0,5>", "S_idle == 0 and S_log == 0 and S_broken == 5"),
    Measure("E5", "S_idle + S_log == 5"),
    Measure("E2", "S_idle + S_log == 2"),
    Measure("E1", "S_idle + S_log == 1"),
)
TABLE1_CASES = ({"r_t": 15.0}, {"r_t": 0.2}, {"r_t": 0.1})


def bundled(name: str) -> str:
    return str(resources.files("pepagg") / "data" / name)


def load_golden(path: Optional[str] = None) -> dict:
    with open(path or bundled("table1_golden.json")) as fh:
        return json.load(fh)


def diff_golden(results: Sequence[CaseResult], golden: dict) -> list[dict]:
    """Cells that differ from the golden values by more than their tolerance."""
    tol = golden["tolerance"]
    bad = []
    for i, (res, want) in enumerate(zip(results, golden["cases"]), 1):
        for row in res.rows:
            for column, got in (("approximate", row.approximate), ("exact", row.exact)):
                target = want.get(column, {}).get(row.measure)
                if target is None or got is None:
                    continue
                if abs(got - target) > tol[column] + 1e-12:
                    bad.append({"case": i, "measure": row.measure, "column": column,
                                "value": round(got, 6), "golden": target, "tolerance": tol[column]})
        target = want.get("boundary_probability")
        got = res.boundary_probability
        if target is not None and got is not None:
            if not math.isclose(got, target, rel_tol=tol["boundary_rel"], abs_tol=tol["boundary_abs"]):
                bad.append({"case": i, "measure": "boundary", "column": "exact", "value": got,
                            "golden": target, "tolerance": tol["boundary_rel"]})
    return bad


def cmd_experiment_table1(model_path: Optional[str] = None, golden_path: Optional[str] = None,
                          jobs: Optional[int] = None, mode: str = BOTH):
    """Run the three thinking-rate cases; return (results, offending cells, timings)."""
    path = model_path or bundled("client_server.pepa")
    results = run_cases(path, TABLE1_CASES, TABLE1_MEASURES, mode=mode, jobs=jobs)
    bad = diff_golden(results, load_golden(golden_path))
    exact_s = sum(r.exact_seconds for r in results)
    approx_s = sum(r.approx_seconds for r in results)
    return results, bad, {"exact_seconds": exact_s, "approx_seconds": approx_s,
                          "ratio": exact_s / approx_s if approx_s > 0 else float("inf")}


def write_outputs(results: Sequence[CaseResult], out_dir: str, fmt: str = "csv") -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, text):
        p = os.path.join(out_dir, name)
        with open(p, "w") as fh:
            fh.write(text)
        written.append(p)

    if fmt == "json":
        put("results.json", results_json(results))
    else:
        put("comparison.csv", rows_csv(results))
        put("boundary.csv", boundary_csv(results))
    if any(r.boundary_probability is not None for r in results):
        if fmt == "json":
            put("boundary.csv", boundary_csv(results))
        put("boundary.gp", gnuplot_script(results))
    return written


def values_array(results: Sequence[CaseResult], column: str) -> np.ndarray:
    """cases x measures array of one column."""
    return np.array([[getattr(r, column) for r in res.rows] for res in results], dtype=float)
