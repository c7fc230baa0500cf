"""Batch runner: ``swarmpid --scenario FILE --out DIR``.

Exit status is 0 on success, 1 for an invalid scenario or arguments and 2
for a fault during the run.  Nothing is written unless the run completes.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .config import parse_scenario
from .pid import PidConfig
from .pso import TuningChannel, convergence_study, study_to_csv
from .sim import MODES, ScenarioError, run_scenario

EMIT_CHOICES = ("telemetry", "events", "metrics", "swarm_trace", "convergence_study")
DEFAULT_EMIT = ("telemetry", "events", "metrics")
DEFAULT_STUDY = (10, 20, 30, 40, 50)


def _csv_list(text, cast, what):
    try:
        items = [cast(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad {what} list {text!r}") from None
    if not items:
        raise argparse.ArgumentTypeError(f"empty {what} list")
    return items


def _emit_list(text):
    items = _csv_list(text, str, "emit")
    bad = [x for x in items if x not in EMIT_CHOICES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown emit target(s) {bad}; choose from {EMIT_CHOICES}")
    return set(items)


def _counts(text):
    items = _csv_list(text, int, "particle count")
    if any(c < 1 for c in items):
        raise argparse.ArgumentTypeError("particle counts must be >= 1")
    return items


def build_parser():
    p = argparse.ArgumentParser(prog="swarmpid", description="Run a multi-channel self-tuning PID scenario.")
    p.add_argument("--scenario", required=True, type=Path, help="scenario TOML file")
    p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--dt", type=float, default=None, help="override the step size in seconds")
    p.add_argument("--emit", type=_emit_list, default=None,
                   help=f"comma list from {','.join(EMIT_CHOICES)} (default: {','.join(DEFAULT_EMIT)})")
    p.add_argument("--study-particles", type=_counts, default=None,
                   help="comma list of swarm sizes for the convergence study")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    emit = set(args.emit or DEFAULT_EMIT)
    if args.study_particles:
        emit.add("convergence_study")

    try:
        scenario = parse_scenario(args.scenario)
        if args.seed is not None:
            scenario.seed = args.seed
        if args.dt is not None:
            scenario.dt = args.dt
        scenario.validate()
        args.out.mkdir(parents=True, exist_ok=True)
    except (OSError, ScenarioError) as exc:
        print(f"swarmpid: {exc}", file=sys.stderr)
        return 1

    try:
        result = run_scenario(scenario)
        study = None
        if "convergence_study" in emit:
            ch = scenario.channels[0]
            replica = TuningChannel(
                ch.plant, ch.sensor, ch.reference_v,
                PidConfig(scenario.dt, ch.u_min, ch.u_max, scenario.d_filter_N, scenario.anti_windup),
                scenario.window,
            )
            study = convergence_study(args.study_particles or DEFAULT_STUDY, scenario.pso, replica,
                                      scenario.weights)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"swarmpid: run failed: {exc}", file=sys.stderr)
        return 2

    out = args.out
    if "telemetry" in emit:
        csvio.write_telemetry(out / "telemetry.csv", result.telemetry)
    if "events" in emit:
        csvio.write_events(out / "events.csv", result.events)
    if "metrics" in emit:
        csvio.write_metrics(out / "metrics.csv", result.metrics)
    if "swarm_trace" in emit:
        counts = {}
        for c, _, trace in result.swarm_traces:
            n = counts[c] = counts.get(c, 0) + 1
            csvio.write_text(out / f"swarm_trace_ch{c + 1}_{n}.csv", trace.to_csv())
    if study is not None:
        csvio.write_text(out / "convergence_study.csv", study_to_csv(study))

    for c, (ch, m) in enumerate(zip(scenario.channels, result.metrics)):
        settle = f"{m.settling_time:.3f}s" if math.isfinite(m.settling_time) else "not settled"
        mode = MODES[result.telemetry.mode[-1, c]].value
        code = result.codes[c].as_tuple()
        print(
            f"channel {c + 1} ({ch.name}): mode={mode} codes={code} overshoot={m.overshoot:.4f} "
            f"settling={settle} iae={m.iae:.6g} ise={m.ise:.6g}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
