"""Scenario files: TOML with one table per component.

Recognized tables are ``[scenario]``, ``[pid]``, ``[pso]``, ``[supervisor]``,
``[ladder]``, ``[channel.N]`` and ``[disturbance.N]`` (N counts from 1).
Every key is optional; unknown tables and keys are rejected.  Channels 1-3
default to motor, temperature and gyroscope.  See ``scenarios/`` for
annotated samples.
"""
from __future__ import annotations

import re
from pathlib import Path

import tomli

from .pid import AntiWindup, ComponentLadder, GainCode
from .plants import FirstOrderPlant, SecondOrderPlant, tachometer_map, temperature_map
from .pso import FitnessWeights, PsoConfig
from .sim import (
    DisturbanceKind,
    DisturbanceSpec,
    Scenario,
    ScenarioError,
    default_channel,
)
from .supervisor import SupervisorConfig

DEFAULT_KINDS = ("motor", "temperature", "gyroscope")

_SCENARIO_KEYS = {"duration": float, "dt": float, "seed": int, "window": float}
_PID_KEYS = {"d_filter_N": float, "anti_windup": str}
_PSO_KEYS = {
    "particles": int, "iterations": int, "w": float, "c1": float, "c2": float,
    "bounds_lo": list, "bounds_hi": list, "v_max": list, "seed": int,
    "alpha": float, "beta": float,
}
_SUPERVISOR_KEYS = {"epsilon_v": float, "hysteresis_v": float, "t_o": float, "n_channels": int}
_LADDER_KEYS = {name: float for name in ComponentLadder.__dataclass_fields__}
_CHANNEL_KEYS = {
    "kind": str, "reference_v": float, "kp_code": int, "ki_code": int, "kd_code": int,
    "u_min": float, "u_max": float, "gain_K": float, "tau_s": float, "omega_n": float,
    "zeta": float, "max_rpm": float, "temperature_min": float,
}
_DISTURBANCE_KEYS = {
    "channel": int, "kind": str, "start": float, "stop": float, "magnitude": float, "parameter": str,
}


class ScenarioParseError(ScenarioError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__([where + message])


def _line_of(text, section, key):
    """Best-effort line number of ``key`` inside ``[section]``."""
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1).replace(" ", "")
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return n
    return None


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


class _Reader:
    def __init__(self, text):
        self.text = text

    def table(self, data, section, spec):
        if not isinstance(data, dict):
            raise ScenarioParseError(f"[{section}] must be a table", _line_of(self.text, section, ""))
        out = {}
        for key, value in data.items():
            if key not in spec:
                raise ScenarioError([f"[{section}]: unknown key {key!r}"])
            want = spec[key]
            if want is list:
                ok = isinstance(value, list) and len(value) == 3 and all(_is_number(v) for v in value)
            elif want is float:
                ok = _is_number(value)
            elif want is int:
                ok = isinstance(value, int) and not isinstance(value, bool)
            else:
                ok = isinstance(value, want)
            if not ok:
                raise ScenarioParseError(
                    f"[{section}] {key}: expected {want.__name__}, got {value!r}",
                    _line_of(self.text, section, key),
                )
            out[key] = float(value) if want is float else value
        return out


def _build(ctor, section, **kwargs):
    try:
        return ctor(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        raise ScenarioError([f"[{section}] {msg}"]) from exc


def parse_scenario_text(text: str) -> Scenario:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioParseError(str(exc), int(m.group(1)) if m else None) from exc

    known = {"scenario", "pid", "pso", "supervisor", "ladder", "channel", "disturbance"}
    for name in raw:
        if name not in known:
            raise ScenarioError([f"unknown section [{name}]"])
    rd = _Reader(text)

    sc = rd.table(raw.get("scenario", {}), "scenario", _SCENARIO_KEYS)
    pid = rd.table(raw.get("pid", {}), "pid", _PID_KEYS)
    pso = rd.table(raw.get("pso", {}), "pso", _PSO_KEYS)
    sup = rd.table(raw.get("supervisor", {}), "supervisor", _SUPERVISOR_KEYS)
    lad = rd.table(raw.get("ladder", {}), "ladder", _LADDER_KEYS)

    ladder = _build(ComponentLadder, "ladder", **lad)
    window = sc.get("window", 5.0)

    weights = _build(
        FitnessWeights, "pso", alpha=pso.pop("alpha", 1.0), beta=pso.pop("beta", 1.0)
    )
    lo, hi = ladder.gain_bounds()
    pso_cfg = _build(
        PsoConfig,
        "pso",
        n_particles=pso.pop("particles", 50),
        n_iterations=pso.pop("iterations", 50),
        bounds_lo=pso.pop("bounds_lo", lo),
        bounds_hi=pso.pop("bounds_hi", hi),
        **pso,
    )

    channel_tables = raw.get("channel", {})
    if not isinstance(channel_tables, dict):
        raise ScenarioError(["[channel] must hold numbered tables such as [channel.1]"])
    ids = []
    for key in channel_tables:
        if not key.isdigit() or int(key) < 1:
            raise ScenarioError([f"[channel.{key}]: channel ids are integers from 1"])
        ids.append(int(key))
    n_channels = sup.get("n_channels", max([3, *ids]))
    extra = [i for i in ids if i > n_channels]
    if extra:
        raise ScenarioError([f"[channel.{extra[0]}] exceeds supervisor n_channels = {n_channels}"])
    channels = []
    for i in range(1, n_channels + 1):
        section = f"channel.{i}"
        cfg = rd.table(channel_tables.get(str(i), {}), section, _CHANNEL_KEYS)
        kind = cfg.pop("kind", DEFAULT_KINDS[i - 1] if i <= 3 else None)
        if kind is None:
            raise ScenarioError([f"[{section}] kind is required beyond channel 3"])
        channels.append(_channel(kind, cfg, section))
    sup.setdefault("n_channels", n_channels)
    sup.setdefault("t_o", 3.0 * window)
    supervisor = _build(SupervisorConfig, "supervisor", **sup)

    disturbances = []
    dist_tables = raw.get("disturbance", {})
    if not isinstance(dist_tables, dict):
        raise ScenarioError(["[disturbance] must hold numbered tables such as [disturbance.1]"])
    for key in sorted(dist_tables, key=lambda k: int(k) if k.isdigit() else -1):
        section = f"disturbance.{key}"
        if not key.isdigit():
            raise ScenarioError([f"[{section}]: disturbance ids are integers from 1"])
        d = rd.table(dist_tables[key], section, _DISTURBANCE_KEYS)
        for need in ("channel", "kind", "start"):
            if need not in d:
                raise ScenarioError([f"[{section}] {need} is required"])
        try:
            kind = DisturbanceKind(d["kind"])
        except ValueError:
            raise ScenarioParseError(
                f"[{section}] kind: expected one of {[k.value for k in DisturbanceKind]}",
                _line_of(text, section, "kind"),
            ) from None
        disturbances.append(
            DisturbanceSpec(
                channel=d["channel"] - 1,
                kind=kind,
                start=d["start"],
                stop=d.get("stop"),
                magnitude=d.get("magnitude", 1.0),
                parameter=d.get("parameter", "gain_K"),
            )
        )

    try:
        anti_windup = AntiWindup(pid.get("anti_windup", "clamp"))
    except ValueError:
        raise ScenarioParseError(
            "[pid] anti_windup: expected 'clamp' or 'conditional'", _line_of(text, "pid", "anti_windup")
        ) from None

    scenario = Scenario(
        duration=sc.get("duration", 300.0),
        dt=sc.get("dt", 1e-3),
        seed=sc.get("seed", 0),
        channels=channels,
        disturbances=disturbances,
        supervisor=supervisor,
        pso=pso_cfg,
        weights=weights,
        ladder=ladder,
        window=window,
        d_filter_N=pid.get("d_filter_N", 10.0),
        anti_windup=anti_windup,
    )
    if not scenario.d_filter_N > 0:
        raise ScenarioError(["[pid] d_filter_N must be positive"])
    return scenario.validate()


def _channel(kind, cfg, section):
    try:
        ch = default_channel(kind)
    except ValueError:
        raise ScenarioError([f"[{section}] kind: unknown channel kind {kind!r}"]) from None
    code = ch.initial_code
    codes = [cfg.pop(k, d) for k, d in zip(("kp_code", "ki_code", "kd_code"), code.as_tuple())]
    ch.initial_code = _build(GainCode, section, kp_code=codes[0], ki_code=codes[1], kd_code=codes[2])
    for key in ("reference_v", "u_min", "u_max"):
        if key in cfg:
            setattr(ch, key, cfg.pop(key))
    if "max_rpm" in cfg:
        if kind != "motor":
            raise ScenarioError([f"[{section}] max_rpm only applies to motor channels"])
        ch.sensor = _build(tachometer_map, section, max_rpm=cfg.pop("max_rpm"))
    if "temperature_min" in cfg:
        if kind != "temperature":
            raise ScenarioError([f"[{section}] temperature_min only applies to temperature channels"])
        ch.sensor = _build(temperature_map, section, physical_min=cfg.pop("temperature_min"))
    p = ch.plant
    if isinstance(p, FirstOrderPlant):
        for key in ("omega_n", "zeta"):
            if key in cfg:
                raise ScenarioError([f"[{section}] {key} does not apply to a first-order {kind} plant"])
        ch.plant = _build(FirstOrderPlant, section, gain_K=cfg.pop("gain_K", p.gain_K),
                          tau_s=cfg.pop("tau_s", p.tau_s))
    elif isinstance(p, SecondOrderPlant):
        if "tau_s" in cfg:
            raise ScenarioError([f"[{section}] tau_s does not apply to the second-order {kind} plant"])
        ch.plant = _build(SecondOrderPlant, section, omega_n=cfg.pop("omega_n", p.omega_n),
                          zeta=cfg.pop("zeta", p.zeta), gain_K=cfg.pop("gain_K", p.gain_K))
    assert not cfg, cfg
    return ch


def parse_scenario(path) -> Scenario:
    """Read a scenario file; raises OSError if it cannot be read."""
    text = Path(path).read_text()
    return parse_scenario_text(text)

