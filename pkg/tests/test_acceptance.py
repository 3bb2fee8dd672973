"""One test per acceptance criterion; each records a PASS/FAIL line.

The lines are printed in the terminal summary (and to stdout with ``-s``).
"""

import math
import time
import warnings

import numpy as np
import pytest

from pepagg.analysis import check_aggregation_condition, classify, partition_groups, reduce
from pepagg.experiment import TABLE1_CASES, TABLE1_MEASURES, bundled, load_golden, run_cases
from pepagg.rates import ApparentRate
from pepagg.solvers import build_marginal_odes, steady_state, transient
from pepagg.statespace import StateLayout, generate_ctmc, initial_state, successors
from pepagg.syntax import ModelWarning, load_model, parse_model
from pepagg.verify import boundary_states, collapse_ck, compare_generators, cross_rates, partition_subchains

from conftest import ACCEPTANCE_LINES, CORPUS, MODEL1, corpus_paths, cs_model

MEASURES = [m.name for m in TABLE1_MEASURES]


def record(n, ok, detail):
    line = f"ACCEPTANCE {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def table():
    start = time.perf_counter()
    results = run_cases(bundled("client_server.pepa"), TABLE1_CASES, TABLE1_MEASURES)
    return results, time.perf_counter() - start


@pytest.fixture(scope="module")
def golden():
    return load_golden()


def _misses(results, golden, column, tol):
    out = []
    for i, (res, want) in enumerate(zip(results, golden["cases"]), 1):
        for row in res.rows:
            got = getattr(row, column)
            if abs(got - want[column][row.measure]) > tol + 1e-12:
                out.append(f"c{i}:{row.measure}={got:.4f}/{want[column][row.measure]}")
    return out


def test_criterion_01_approximate_column(table, golden):
    results, _ = table
    misses = _misses(results, golden, "approximate", 0.001)
    columns = [[r.approximate for r in res.rows] for res in results]
    identical = all(np.allclose(c, columns[0], rtol=0, atol=1e-12) for c in columns)
    slowest = max(res.approx_seconds for res in results)
    ok = not misses and identical and slowest < 1.0
    record(1, ok, f"approx within ±0.001: {len(misses)} miss(es) {' '.join(misses[:6])}; "
                  f"identical across cases: {identical}; slowest case {slowest:.3f}s (<1s)")


def test_criterion_02_exact_column(table, golden):
    results, wall = table
    misses = _misses(results, golden, "exact", 0.005)
    sizes = {res.full_states for res in results}
    ok = not misses and wall < 60 and sizes == {2121}
    record(2, ok, f"exact within ±0.005: {len(misses)}/18 miss(es) {' '.join(misses[:6])}; "
                  f"full states {sorted(sizes)}; table wall {wall:.1f}s (<60s)")


def test_criterion_03_error_trend(table):
    results, _ = table
    errs = np.array([[r.error_pct for r in res.rows] for res in results])
    bad = [MEASURES[j] for j in range(errs.shape[1]) if np.any(np.diff(errs[:, j]) < 0)]
    detail = " ".join(f"{m}:{'/'.join(f'{e:.1f}' for e in errs[:, j])}" for j, m in enumerate(MEASURES))
    record(3, not bad, f"error % nondecreasing case 1→3 ({detail})" + (f"; decreasing: {bad}" if bad else ""))


def test_criterion_04_boundary_probability(table, golden):
    results, _ = table
    probs = [res.boundary_probability for res in results]
    increasing = all(a < b for a, b in zip(probs, probs[1:]))
    tol = golden["tolerance"]
    frozen = all(math.isclose(p, c["boundary_probability"], rel_tol=tol["boundary_rel"], abs_tol=tol["boundary_abs"])
                 for p, c in zip(probs, golden["cases"]))
    ok = increasing and probs[0] < 0.01 and frozen
    record(4, ok, f"P(C_r=0) = {', '.join(f'{p:.4g}' for p in probs)}; strictly increasing: {increasing}; "
                  f"case 1 < 0.01: {probs[0] < 0.01}; matches frozen golden: {frozen}")


def _collapse_diff(model):
    part = partition_groups(model)
    cls = classify(model, part)
    full = generate_ctmc(model)
    chains = partition_subchains(full, cls, full.layout.sub_layout(part.small))
    boundary = boundary_states(full, model, part, chains, cls)
    table = cross_rates(full, chains, boundary, cls)
    collapsed = collapse_ck(full, chains, table, boundary)
    return compare_generators(collapsed, generate_ctmc(reduce(model, part))), table


def test_criterion_05_two_routes_same_equations():
    diffs = {name: _collapse_diff(m)[0].max_diff for name, m in (("2s/2c", cs_model(2, 2)), ("5s/100c", cs_model(5, 100)))}
    ok = all(d <= 1e-12 for d in diffs.values())
    record(5, ok, "max coefficient diff " + ", ".join(f"{k}: {v:.2e}" for k, v in diffs.items()) + " (≤1e-12)")


def test_criterion_06_structure_independence():
    chains = {}
    for n in (2, 10, 100):
        m = cs_model(5, n)
        chains[n] = generate_ctmc(reduce(m, partition_groups(m)))
    ref = chains[2]
    same = all(c.to_json() == ref.to_json() for c in chains.values())
    record(6, same, f"aggregated CTMCs for 2/10/100 clients: {ref.size} states, {len(ref.rate)} transitions, "
                    f"identical states and rates: {same}")


def test_criterion_07_rate_regularity_corpus():
    verdicts = {}
    for path in corpus_paths():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModelWarning)
            m = load_model(path)
        assert check_aggregation_condition(m, partition_groups(m)).satisfied
        _, table = _collapse_diff(m)
        verdicts[path.stem] = table.regular
    needed = {"client_server", "two_server_types", "three_small"}
    ok = len(verdicts) >= 5 and needed <= set(verdicts) and all(verdicts.values())
    record(7, ok, f"regular on {sum(verdicts.values())}/{len(verdicts)} models: "
                  + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in verdicts.items()))


def test_criterion_08_state_counts():
    agg = {}
    for ns in range(1, 7):
        m = cs_model(ns, 10)
        agg[ns] = generate_ctmc(reduce(m, partition_groups(m))).size
    formula = all(agg[ns] == math.comb(ns + 2, 2) for ns in agg)
    full = generate_ctmc(cs_model(2, 2)).size
    ok = formula and agg[2] == 6 and agg[5] == 21 and full == 18
    record(8, ok, f"aggregated sizes {agg} = C(n_s+2,2): {formula}; full 2s/2c = {full}")


def _property_suites():
    rng = np.random.default_rng(20240601)
    problems = []
    # passive arithmetic over random inputs
    for _ in range(2000):
        w1, w2 = (int(x) for x in rng.integers(1, 10**6, size=2))
        n = int(rng.integers(0, 10**4))
        r = float(rng.uniform(1e-6, 1e6))
        checks = [
            ApparentRate(True, w1) + ApparentRate(True, w2) == ApparentRate(True, w1 + w2),
            ApparentRate(True, w1).scale(n).value == n * w1,
            ApparentRate(True, 1).scale(w1) == ApparentRate(True, w1),
            ApparentRate(True, w1).min(ApparentRate(True, w2)) == ApparentRate(True, min(w1, w2)),
            ApparentRate(False, r).min(ApparentRate(True, w1)) == ApparentRate(False, r),
            ApparentRate(False, r).min(ApparentRate(True, 0)).is_zero,
        ]
        if not all(checks):
            problems.append(f"passive law failed for w1={w1} w2={w2} n={n} r={r}")
            break
    # population conservation along a 10^4-step random walk
    model = cs_model(5, 100)
    layout = StateLayout.of(model)
    state = initial_state(model)
    for _ in range(10_000):
        succ = successors(model, state)
        rates = np.array([s[1] for s in succ])
        state = succ[rng.choice(len(succ), p=rates / rates.sum())][2]
        if [sum(state[layout.slice(g)]) for g in layout.groups] != [5, 100] or min(state) < 0:
            problems.append(f"population changed at {state}")
            break
    # column sums of every corpus generator
    worst = 0.0
    for path in corpus_paths():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ModelWarning)
            odes = build_marginal_odes(generate_ctmc(load_model(path)))
        worst = max(worst, np.abs(odes.column_sums()).max() / np.abs(odes.matrix.diagonal()).max())
    if worst > 1e-12:
        problems.append(f"column sum {worst:.2e}")
    # transient against the closed form of a two-state chain
    lam, mu = 3.0, 0.5
    two = generate_ctmc(parse_model(f"Off = (up, {lam}).On; On = (down, {mu}).Off; system = G{{Off[1]}};"))
    times = [0.1, 0.5, 1.0, 3.0, 10.0]
    analytic_err = max(abs(d.probs[1] - lam / (lam + mu) * (1 - math.exp(-(lam + mu) * d.time)))
                       for d in transient(build_marginal_odes(two), [1.0, 0.0], times))
    if analytic_err > 1e-6:
        problems.append(f"two-state transient error {analytic_err:.2e}")
    # transient converges to the steady state (t = 10^4 with the CS rates)
    m = cs_model(5, 100)
    agg = generate_ctmc(reduce(m, partition_groups(m)))
    p0 = np.zeros(agg.size)
    p0[0] = 1.0
    (late,) = transient(build_marginal_odes(agg), p0, [1e4], method="trapezoid")
    conv_err = np.abs(late.probs - steady_state(agg).probs).max()
    if conv_err > 1e-5:
        problems.append(f"steady-state convergence error {conv_err:.2e}")
    return problems, worst, analytic_err, conv_err


def test_criterion_09_property_suites():
    problems, worst, analytic_err, conv_err = _property_suites()
    record(9, not problems, f"passive laws x2000, 10^4-step conservation, column sums (worst {worst:.1e}), "
                            f"two-state transient err {analytic_err:.1e} (≤1e-6), t=1e4 convergence err {conv_err:.1e} "
                            f"(≤1e-5)" + (f"; problems: {problems}" if problems else ""))


def test_criterion_10_negative_control():
    m = parse_model(MODEL1)
    report = check_aggregation_condition(m, partition_groups(m))
    named = [(v.group, v.action) for v in report.violations]
    ok = not report.satisfied and named == [("Clients", "req")]
    record(10, ok, f"original model with active r_c: satisfied={report.satisfied}, violations={named}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
