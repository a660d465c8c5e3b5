"""Command line entry point.

    wayfinder run --procedure 4 --seed 7
    wayfinder batch --runs 50 --calibration C3
    wayfinder sweep --grid grid.json
    wayfinder compare --report report.csv
    wayfinder fields --dump path:1
    wayfinder paths

All tables are CSV on stdout (or ``--out``).  ``WAYFINDER_SEED`` sets the
default seed.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys

from . import harness
from .cognitive import build_knowledge
from .engine import Model, Simulation, result_csv_header, result_csv_row, trace_to_csv
from .fields import compute_obstacle_field, field_to_csv
from .scenario import ScenarioError, close_openings, load_experiment, load_scenario


def _default_seed() -> int:
    return int(os.environ.get("WAYFINDER_SEED", "0"))


def _scenario(args):
    base = load_scenario(args.scenario) if args.scenario else load_experiment()
    procedure = getattr(args, "procedure", None)
    if procedure is not None:
        base = close_openings(base, harness.PROCEDURES[procedure] & set(base.openings))
    return base


@contextlib.contextmanager
def _output(path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


def cmd_run(args) -> int:
    s = _scenario(args)
    sim = Simulation(Model(s), seed=args.seed, trace=bool(args.trace))
    result = sim.run(args.max_steps)
    with _output(args.out) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(result_csv_header())
        wr.writerow(result_csv_row(result, s.name, args.procedure))
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace_to_csv(result.trace))
    return 0 if result.complete else 3


def cmd_batch(args) -> int:
    base = load_scenario(args.scenario) if args.scenario else load_experiment()
    config = base.config
    if args.calibration != "custom":
        config = harness.calibrate(config, args.calibration)
    procs = [int(p) for p in args.procedures.split(",")]
    report = harness.run_batch(procs, config, args.runs, args.seed, args.calibration, base)
    with _output(args.out) as fh:
        fh.write(report.to_csv())
    return 0 if report.incomplete == 0 else 3


def cmd_sweep(args) -> int:
    base = load_scenario(args.scenario) if args.scenario else load_experiment()
    configs = harness.config_grid(base.config, harness.load_grid(args.grid))
    procs = [int(p) for p in args.procedures.split(",")]
    reports = harness.sweep(configs, args.runs, procs, args.seed, base)
    with _output(args.out) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["rank", "config", "total_score", "total_variance", "incomplete"] + [f"score_p{p}" for p in procs])
        for rank, rep in enumerate(reports, start=1):
            wr.writerow(
                [rank, rep.label, f"{rep.total_score:.4f}", f"{sum(p.total_variance for p in rep.procedures.values()):.4f}", rep.incomplete]
                + [f"{rep.procedures[p].score:.4f}" if rep.procedures[p].score is not None else "" for p in procs]
            )
    return 0 if all(r.incomplete == 0 for r in reports) else 3


def cmd_compare(args) -> int:
    with open(args.report, encoding="utf-8") as fh:
        means = harness.read_report(fh.read())
    with _output(args.out) as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["procedure"] + [f"sim_{g}" for g in harness.GATE_ORDER] + [f"ref_{g}" for g in harness.GATE_ORDER] + ["score"])
        for p in sorted(means):
            if p not in harness.OBSERVED_AVERAGES:
                continue
            ref = harness.OBSERVED_AVERAGES[p]
            wr.writerow([p, *means[p], *ref, f"{harness.score(means[p], ref):.4f}"])
    return 0


def cmd_fields(args) -> int:
    s = _scenario(args)
    if args.dump == "obstacle":
        values = compute_obstacle_field(s).values
    elif args.dump.startswith("path:"):
        target = args.dump.split(":", 1)[1]
        fields = build_knowledge(s).fields
        if target not in fields:
            raise ScenarioError(f"no opening or destination {target!r}")
        values = fields[target].values
    else:
        raise ScenarioError(f"unknown field {args.dump!r}; use path:ID or obstacle")
    with _output(args.out) as fh:
        fh.write(field_to_csv(values))
    return 0


def cmd_paths(args) -> int:
    k = build_knowledge(_scenario(args))
    rows = [
        {"destination": d, "region": region, "path": list(p.targets), "tt": round(p.free_flow_time, 6)}
        for d, tree in sorted(k.trees.items())
        for (region, _first) in sorted(tree.entries)
        for p in tree.entries[(region, _first)]
    ]
    with _output(args.out) as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wayfinder", description="Pedestrian route choice simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, procedure=True):
        p.add_argument("--scenario", help="scenario document (default: bundled experiment)")
        p.add_argument("--out", help="write output here instead of stdout")
        if procedure:
            p.add_argument("--procedure", type=int, choices=sorted(harness.PROCEDURES), default=None)

    p = sub.add_parser("run", help="single simulation run")
    common(p)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--trace", help="write a per-step agent trace CSV here")
    p.add_argument("--max-steps", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="Monte-Carlo batch over procedures")
    common(p, procedure=False)
    p.add_argument("--runs", type=int, default=harness.DEFAULT_RUNS)
    p.add_argument("--calibration", choices=[*harness.CALIBRATIONS, "custom"], default="C3")
    p.add_argument("--procedures", default="2,3,4")
    p.add_argument("--seed", type=int, default=_default_seed(), help="base seed")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("sweep", help="grid sweep ranked by score")
    common(p, procedure=False)
    p.add_argument("--grid", required=True, help="JSON object of key -> list of values")
    p.add_argument("--runs", type=int, default=harness.DEFAULT_RUNS)
    p.add_argument("--procedures", default="2,3,4")
    p.add_argument("--seed", type=int, default=_default_seed(), help="base seed")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="compare a batch report with the observed counts")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fields", help="dump a floor field as CSV")
    common(p)
    p.add_argument("--dump", required=True, help="path:ID or obstacle")
    p.set_defaults(func=cmd_fields)

    p = sub.add_parser("paths", help="dump the paths trees")
    common(p)
    p.set_defaults(func=cmd_paths)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"wayfinder: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
