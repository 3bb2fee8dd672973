"""``pepa`` command line.

Exit codes: 0 success, 1 other model error, 2 usage, 3 parse error,
4 aggregation condition fails, 5 state cap exceeded, 6 reducible chain,
7 irregular cross-chain rates, 8 golden tolerance breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import analysis, experiment, solvers, verify
from .measures import parse_measures
from .statespace import DEFAULT_STATE_CAP, StateCapExceeded, generate_ctmc
from .syntax import ModelWarning, PepaError, PepaSyntaxError, format_model, load_model

OK, MODEL_ERROR, USAGE, PARSE_ERROR, CONDITION_FAILED, STATE_CAP, REDUCIBLE, IRREGULAR, TOLERANCE = range(9)

log = logging.getLogger("pepagg")

_EXIT = (
    (PepaSyntaxError, PARSE_ERROR),
    (experiment.ConditionFailed, CONDITION_FAILED),
    (StateCapExceeded, STATE_CAP),
    (solvers.ReducibleChainError, REDUCIBLE),
    (verify.IrregularRatesError, IRREGULAR),
    (experiment.ToleranceBreach, TOLERANCE),
)


def _setup_logging() -> None:
    level = os.environ.get("PEPA_LOG", "WARNING").strip().upper()
    if level.isdigit():
        level = int(level)
    elif level not in logging._nameToLevel:
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if logging.getLogger().getEffectiveLevel() > logging.WARNING:
        warnings.simplefilter("ignore", ModelWarning)


def _pairs(items, cast):
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {item!r}")
        out[name.strip()] = cast(value)
    return out


def _load(args):
    model = load_model(args.model)
    pops = _pairs(args.population, int)
    if pops:
        model = model.with_populations(pops)
    rates = _pairs(args.rate, float)
    if rates:
        model = model.with_rates(rates)
    return model


def _emit(args, name: str, text: str) -> None:
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text)
        log.info("wrote %s", os.path.join(args.out, name))
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset, tuple)):
        return sorted(o) if isinstance(o, (set, frozenset)) else list(o)
    raise TypeError(type(o).__name__)


def _partition(model, args):
    part = analysis.partition_groups(model, args.threshold)
    return part, analysis.classify(model, part)


def _require_condition(model, part):
    report = analysis.check_aggregation_condition(model, part)
    if not report.satisfied:
        raise experiment.ConditionFailed(report)
    return report


def _check_report(model, args) -> dict:
    part, cls = _partition(model, args)
    report = analysis.check_aggregation_condition(model, part, strict=args.strict)
    return {
        "partition": {"small": sorted(part.small), "large": sorted(part.large)},
        "classification": cls.as_dict(),
        "condition": report.as_dict(),
    }


# ---------------------------------------------------------------------------
# subcommands

def cmd_parse(args) -> int:
    model = _load(args)
    if args.format == "json":
        out = {
            "groups": [{"label": g.label, "component": g.component, "initial": dict(g.initial_counts)}
                       for g in model.groups],
            "components": {n: {"states": list(c.states),
                               "transitions": [[t.source, t.action, str(t.rate), t.target] for t in c.transitions]}
                           for n, c in model.components.items()},
            "rates": {k: str(v) for k, v in model.rates.items()},
        }
        _emit(args, "model.json", _dump(out))
    else:
        _emit(args, "model.pepa", format_model(model))
    return OK


def cmd_check(args) -> int:
    out = _check_report(_load(args), args)
    _emit(args, "check.json", _dump(out))
    return OK if out["condition"]["satisfied"] else CONDITION_FAILED


def cmd_reduce(args) -> int:
    model = _load(args)
    part, _ = _partition(model, args)
    _require_condition(model, part)
    _emit(args, "reduced.pepa", format_model(analysis.reduce(model, part)))
    return OK


def _transitions_csv(ctmc) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "action", "rate"])
    for s, d, a, r in ctmc.transitions:
        w.writerow([" ".join(map(str, ctmc.state(s))), " ".join(map(str, ctmc.state(d))), a, repr(r)])
    return buf.getvalue()


def cmd_aggregate(args) -> int:
    model = _load(args)
    part, _ = _partition(model, args)
    _require_condition(model, part)
    agg = generate_ctmc(analysis.reduce(model, part), state_cap=args.state_cap)
    log.info("aggregated CTMC: %d states, %d transitions", agg.size, len(agg.rate))
    if args.format == "csv":
        _emit(args, "aggregated.csv", _transitions_csv(agg))
    else:
        _emit(args, "aggregated.json", agg.to_json() + "\n")
    if args.out:
        _emit(args, "aggregated.mtx", agg.to_matrix_market())
    return OK


def _marginal_rows(model, args):
    """(labels, exact sums or None, approximate probs or None, small layout)."""
    part, cls = _partition(model, args)
    _require_condition(model, part)
    exact = approx = None
    small = None
    if args.mode in ("approx", "both"):
        agg = generate_ctmc(analysis.reduce(model, part), state_cap=args.state_cap)
        pi = solvers.steady_state(agg)
        approx = {agg.state(i): float(p) for i, p in enumerate(pi.probs)}
        small = agg.layout
    if args.mode in ("exact", "both"):
        full = generate_ctmc(model, state_cap=args.state_cap)
        pi = solvers.steady_state(full)
        small = full.layout.sub_layout(part.small)
        chains = verify.partition_subchains(full, cls, small)
        sums = solvers.chain_sums(pi, chains.chain_index, chains.count)
        exact = dict(zip(chains.keys, sums.tolist()))
    labels = sorted(set(exact or ()) | set(approx or ()))
    return labels, exact, approx, small


def cmd_solve(args) -> int:
    model = _load(args)
    if args.times:
        return _solve_transient(model, args)
    labels, exact, approx, small = _marginal_rows(model, args)
    if args.format == "json":
        rows = [{"state": list(lab),
                 "exact": None if exact is None else exact.get(lab, 0.0),
                 "approximate": None if approx is None else approx.get(lab, 0.0)} for lab in labels]
        _emit(args, "marginal.json", _dump({"layout": small.as_dict(), "rows": rows}))
        return OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = small.labels
    cols = (["exact"] if exact is not None else []) + (["approximate"] if approx is not None else [])
    w.writerow(head + cols)
    for lab in labels:
        vals = ([repr(exact.get(lab, 0.0))] if exact is not None else []) + \
               ([repr(approx.get(lab, 0.0))] if approx is not None else [])
        w.writerow(list(lab) + vals)
    _emit(args, "marginal.csv", buf.getvalue())
    return OK


def _solve_transient(model, args) -> int:
    times = [float(t) for t in args.times.split(",")]
    part, _ = _partition(model, args)
    if args.mode == "exact":
        ctmc = generate_ctmc(model, state_cap=args.state_cap)
    else:
        _require_condition(model, part)
        ctmc = generate_ctmc(analysis.reduce(model, part), state_cap=args.state_cap)
    odes = solvers.build_marginal_odes(ctmc)
    p0 = np.zeros(ctmc.size)
    p0[ctmc.initial] = 1.0
    dists = solvers.transient(odes, p0, times, method=args.method)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", *ctmc.layout.labels, "probability"])
    for d in dists:
        for i, p in enumerate(d.probs):
            w.writerow([repr(d.time), *ctmc.state(i), repr(float(p))])
    _emit(args, "transient.csv", buf.getvalue())
    return OK


def verify_report(model, args) -> dict:
    # runs on non-conforming models too: irregular rates are what it is for
    part, cls = _partition(model, args)
    condition = analysis.check_aggregation_condition(model, part)
    full = generate_ctmc(model, state_cap=args.state_cap)
    small = full.layout.sub_layout(part.small)
    chains = verify.partition_subchains(full, cls, small)
    boundary = verify.boundary_states(full, model, part, chains, cls)
    table = verify.cross_rates(full, chains, boundary, cls)
    per_chain = boundary.per_chain()
    report = {
        "full_states": full.size,
        "chains": chains.count,
        "boundary": {
            "states": len(boundary.states),
            "per_chain": {" ".join(map(str, chains.keys[c])): len(v["boundary"]) for c, v in sorted(per_chain.items())},
        },
        "condition_satisfied": condition.satisfied,
        "regular": table.regular,
        "irregularities": list(table.irregularities[:20]),
    }
    if not table.regular and not args.force_collapse:
        report["max_diff"] = None
        return report
    collapsed = verify.collapse_ck(full, chains, table, boundary, force=args.force_collapse)
    agg = generate_ctmc(analysis.reduce(model, part), state_cap=args.state_cap)
    report.update(verify.compare_generators(collapsed, agg).as_dict())
    return report


def cmd_verify(args) -> int:
    report = verify_report(_load(args), args)
    _emit(args, "verify.json", _dump(report))
    return OK if report["regular"] or args.force_collapse else IRREGULAR


def _write_results(results, args) -> None:
    if args.out:
        experiment.write_outputs(results, args.out, args.format)
    elif args.format == "json":
        sys.stdout.write(experiment.results_json(results))
    else:
        sys.stdout.write(experiment.rows_csv(results))


def cmd_compare(args) -> int:
    measures = parse_measures(args.measure or ())
    if not measures:
        raise argparse.ArgumentTypeError("compare needs at least one --measure NAME=EXPR")
    overrides = {}
    for item in args.set or ():
        name, sep, values = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected NAME=V1,V2,..., got {item!r}")
        overrides[name.strip()] = [float(v) for v in values.split(",")]
    spec = experiment.ExperimentSpec(args.model, overrides, measures, args.mode, args.zip)
    base = load_model(args.model)
    base.with_rates({k: v[0] for k, v in overrides.items()})   # reject unknown names early
    results = experiment.cmd_compare(spec, args.threshold, args.state_cap, args.jobs)
    _write_results(results, args)
    sys.stderr.write(experiment.render_table(results))
    return OK


def cmd_table1(args) -> int:
    results, bad, timing = experiment.cmd_experiment_table1(args.model, args.golden, args.jobs, args.mode)
    sys.stdout.write(experiment.render_table(results))
    if args.out:
        experiment.write_outputs(results, args.out, args.format)
    if args.mode == "both":
        sys.stdout.write(f"exact/approximate time ratio {timing['ratio']:.1f}\n")
    if bad:
        sys.stdout.write("cells outside golden tolerance:\n")
        for c in bad:
            sys.stdout.write(f"  case {c['case']} {c['measure']} {c['column']}: "
                             f"{c['value']:.6g} vs {c['golden']:.6g} (tol {c['tolerance']:g})\n")
        return TOLERANCE
    return OK


def cmd_analyze(args) -> int:
    if not args.out:
        raise argparse.ArgumentTypeError("analyze needs --out DIR")
    model = _load(args)
    out = _check_report(model, args)
    _emit(args, "check.json", _dump(out))
    if not out["condition"]["satisfied"]:
        return CONDITION_FAILED
    part, _ = _partition(model, args)
    reduced = analysis.reduce(model, part)
    _emit(args, "reduced.pepa", format_model(reduced))
    agg = generate_ctmc(reduced, state_cap=args.state_cap)
    _emit(args, "aggregated.json", agg.to_json() + "\n")
    _emit(args, "aggregated.mtx", agg.to_matrix_market())
    pi = solvers.steady_state(agg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(agg.layout.labels + ["probability"])
    for i in sorted(range(agg.size), key=agg.state):
        w.writerow(list(agg.state(i)) + [repr(float(pi.probs[i]))])
    _emit(args, "marginal.csv", buf.getvalue())
    return OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threshold", type=int, default=None,
                        help="population at or below which an unannotated group is small")
    common.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP, help="maximum number of states to explore")
    common.add_argument("--mode", choices=("exact", "approx", "both"), default="both")
    common.add_argument("--out", help="directory for output files (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--force-collapse", action="store_true",
                        help="collapse the full equations even when cross-chain rates are irregular")

    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("model", help="grouped PEPA model file")
    model_opts.add_argument("--rate", action="append", metavar="NAME=VALUE", help="override a rate constant")
    model_opts.add_argument("--population", action="append", metavar="GROUP=N", help="resize a group")

    p = argparse.ArgumentParser(prog="pepa", description="Grouped PEPA models: aggregation and exact analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("parse", parents=[common, model_opts], help="parse and pretty-print a model").set_defaults(func=cmd_parse)
    c = sub.add_parser("check", parents=[common, model_opts], help="classify actions and check the aggregation condition")
    c.add_argument("--strict", action="store_true", help="demand passive offers from every large-group local state")
    c.set_defaults(func=cmd_check)
    sub.add_parser("reduce", parents=[common, model_opts], help="print the reduced model").set_defaults(func=cmd_reduce)
    sub.add_parser("aggregate", parents=[common, model_opts], help="generate the aggregated CTMC").set_defaults(func=cmd_aggregate)
    s = sub.add_parser("solve", parents=[common, model_opts], help="steady-state (or transient) marginal distribution")
    s.add_argument("--times", help="comma-separated output times for a transient solution")
    s.add_argument("--method", choices=("rk45", "trapezoid"), default="rk45")
    s.set_defaults(func=cmd_solve)
    sub.add_parser("verify", parents=[common, model_opts],
                   help="check sub-chains, boundary states and rate regularity against the full CTMC").set_defaults(func=cmd_verify)
    cm = sub.add_parser("compare", parents=[common, model_opts], help="exact vs approximate measures")
    cm.add_argument("--set", action="append", metavar="NAME=V1,V2", help="rate values to sweep")
    cm.add_argument("--zip", action="store_true", help="pair sweep values instead of taking all combinations")
    cm.add_argument("--measure", action="append", metavar="NAME=EXPR", help="predicate over small-group counts")
    cm.add_argument("--jobs", type=int, default=None)
    cm.set_defaults(func=cmd_compare)
    t = sub.add_parser("table1", parents=[common], help="client/server experiment against the golden values")
    t.add_argument("--model", default=None, help="alternative model file")
    t.add_argument("--golden", default=None, help="alternative golden JSON")
    t.add_argument("--jobs", type=int, default=None)
    t.set_defaults(func=cmd_table1)
    a = sub.add_parser("analyze", parents=[common, model_opts], help="write check, reduced model, aggregated CTMC and marginals")
    a.add_argument("--strict", action="store_true")
    a.set_defaults(func=cmd_analyze)
    return p


_DEFAULT_FORMAT = {"parse": None, "check": "json", "verify": "json", "aggregate": "json"}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = _DEFAULT_FORMAT.get(args.command, "csv")
    if not hasattr(args, "strict"):
        args.strict = False
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except PepaError as exc:
        code = next((c for cls, c in _EXIT if isinstance(exc, cls)), MODEL_ERROR)
        sys.stderr.write(f"pepa: {exc}\n")
        if isinstance(exc, experiment.ConditionFailed):
            sys.stdout.write(_dump(exc.report.as_dict()))
        if isinstance(exc, experiment.ToleranceBreach):
            for cell in exc.cells:
                sys.stderr.write(f"  {cell}\n")
        return code
    except OSError as exc:
        sys.stderr.write(f"pepa: {exc}\n")
        return MODEL_ERROR


if __name__ == "__main__":
    sys.exit(main())
