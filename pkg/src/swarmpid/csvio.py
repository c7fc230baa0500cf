"""CSV writers and readers for telemetry, events, metrics and swarm traces.

Floats are written with ``repr`` so output is exact and byte-stable across
runs.  Writers go through a temp file in the target directory followed by
a rename, so a failed run never leaves a partial file behind.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

from .sim import TELEMETRY_HEADER, Metrics, Telemetry, TelemetryRecord

EVENTS_HEADER = ["t", "channel", "kind"]
METRICS_HEADER = ["channel", "overshoot", "settling_time", "iae", "ise"]
TRACE_HEADER = ["iteration", "kp", "ki", "kd", "fitness"]
STUDY_HEADER = ["particles", "iterations_to_threshold", "seconds"]


@contextmanager
def atomic_writer(path):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_text(path, text: str):
    with atomic_writer(path) as fh:
        fh.write(text)


def write_telemetry(path, telemetry: Telemetry):
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_HEADER)
        for rec in telemetry.records():
            w.writerow(
                (repr(rec.t), rec.channel, repr(rec.ref_v), repr(rec.y_v), repr(rec.u_v),
                 repr(rec.error_v), rec.kp_code, rec.ki_code, rec.kd_code, rec.mode, rec.event)
            )


def write_events(path, events):
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENTS_HEADER)
        for ev in events:
            w.writerow((repr(ev.time), ev.channel + 1, ev.kind.value))


def write_metrics(path, metrics):
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for c, m in enumerate(metrics, start=1):
            w.writerow((c, repr(m.overshoot), repr(m.settling_time), repr(m.iae), repr(m.ise)))


def _read(path, header):
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        got = next(rows)
        if got != header:
            raise ValueError(f"{path}: header {got} does not match {header}")
        yield from rows


def read_telemetry(path):
    out = []
    for r in _read(path, TELEMETRY_HEADER):
        out.append(
            TelemetryRecord(float(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5]),
                            int(r[6]), int(r[7]), int(r[8]), r[9], r[10])
        )
    return out


def read_events(path):
    return [(float(r[0]), int(r[1]), r[2]) for r in _read(path, EVENTS_HEADER)]


def read_metrics(path):
    return [(int(r[0]), Metrics(*(float(v) for v in r[1:]))) for r in _read(path, METRICS_HEADER)]


def read_trace(path):
    return [(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in _read(path, TRACE_HEADER)]


def read_study(path):
    return [(int(r[0]), int(r[1]), float(r[2])) for r in _read(path, STUDY_HEADER)]


def is_settled(m: Metrics) -> bool:
    return math.isfinite(m.settling_time)
