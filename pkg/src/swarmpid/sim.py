"""Fixed-step engine running N supervised closed loops side by side.

Per sample, in order: sense, supervise, control, actuate, integrate.  A
tuner grant runs the swarm search on a quiescent replica of the channel at
once, but the new code is only installed once the search's simulated cost
(iterations x evaluation window) has elapsed on the shared timeline.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .pid import AntiWindup, ComponentLadder, GainCode, PidConfig
from .plants import (
    FirstOrderPlant,
    Plant,
    SecondOrderPlant,
    SensorMap,
    gyroscope_map,
    gyroscope_plant,
    motor_plant,
    sensor_to_voltage,
    tachometer_map,
    temperature_map,
    temperature_plant,
    voltage_to_physical,
)
from .pso import FitnessWeights, PsoConfig, TuningChannel, run_pso, step_overshoot
from .supervisor import (
    ChannelState,
    ControllerBank,
    EventKind,
    Mode,
    SupervisorConfig,
    SupervisorEvent,
    TunerAllocator,
    install_gains,
    supervise_step,
)

MODES = list(Mode)
_MODE_INDEX = {m: i for i, m in enumerate(MODES)}


class ScenarioError(ValueError):
    """Invalid scenario; ``problems`` lists every failed check."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DisturbanceKind(str, enum.Enum):
    PULSE = "Pulse"
    SUSTAINED_STEP = "SustainedStep"
    PARAMETER_SHIFT = "ParameterShift"


@dataclass
class DisturbanceSpec:
    channel: int  # 0-based
    kind: DisturbanceKind
    start: float
    stop: float | None = None
    magnitude: float = 1.0  # volts, or a multiplier for ParameterShift
    parameter: str = "gain_K"

    def __post_init__(self):
        self.kind = DisturbanceKind(self.kind)


@dataclass
class ChannelSpec:
    name: str
    plant: Plant
    sensor: SensorMap
    reference_v: float
    initial_code: GainCode
    u_min: float = 0.0
    u_max: float = 5.0


# codes found by exhaustive search of each default channel's step response
DEFAULT_CODES = {
    "motor": GainCode(8, 0, 1),
    "temperature": GainCode(15, 0, 0),
    "gyroscope": GainCode(3, 0, 2),
}


def default_channel(kind: str) -> ChannelSpec:
    if kind == "motor":
        return ChannelSpec("motor", motor_plant(), tachometer_map(), 2.5, DEFAULT_CODES[kind], 0.0, 5.0)
    if kind == "temperature":
        return ChannelSpec(
            "temperature", temperature_plant(), temperature_map(), 2.5, DEFAULT_CODES[kind], 0.0, 5.0
        )
    if kind == "gyroscope":
        return ChannelSpec(
            "gyroscope", gyroscope_plant(), gyroscope_map(), 3.5, DEFAULT_CODES[kind], -2.5, 2.5
        )
    raise ValueError(f"unknown channel kind {kind!r}")


def default_channels():
    return [default_channel(k) for k in ("motor", "temperature", "gyroscope")]


@dataclass
class Scenario:
    duration: float = 300.0
    dt: float = 1e-3
    seed: int = 0
    channels: list = field(default_factory=default_channels)
    disturbances: list = field(default_factory=list)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    pso: PsoConfig = field(default_factory=PsoConfig)
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    ladder: ComponentLadder = field(default_factory=ComponentLadder)
    window: float = 5.0
    d_filter_N: float = 10.0
    anti_windup: AntiWindup = AntiWindup.CLAMP

    @property
    def n_steps(self):
        return int(math.floor(self.duration / self.dt + 1e-9))

    @property
    def tuning_duration(self):
        return self.pso.n_iterations * self.window

    def problems(self):
        out = []
        if not self.duration > 0:
            out.append("duration must be positive")
        if not self.dt > 0:
            out.append("dt must be positive")
        elif self.dt > self.duration:
            out.append("dt must not exceed duration")
        if not self.window > 0:
            out.append("window must be positive")
        if not self.channels:
            out.append("at least one channel is required")
        if self.supervisor.n_channels != len(self.channels):
            out.append(
                f"supervisor.n_channels = {self.supervisor.n_channels} but "
                f"{len(self.channels)} channels are defined"
            )
        for i, ch in enumerate(self.channels, start=1):
            if not ch.u_min < ch.u_max:
                out.append(f"channel.{i}: u_min must be < u_max")
                continue
            try:
                y = voltage_to_physical(ch.sensor, ch.reference_v)
            except ValueError:
                out.append(f"channel.{i}: reference_v {ch.reference_v} outside the sensor swing")
                continue
            u = ch.plant.steady_input(y)
            if not ch.u_min <= u <= ch.u_max:
                out.append(f"channel.{i}: reference_v needs u = {u:.4g} V, outside [u_min, u_max]")
        for i, d in enumerate(self.disturbances, start=1):
            if not 0 <= d.channel < len(self.channels):
                out.append(f"disturbance.{i}: channel {d.channel + 1} does not exist")
            if d.stop is not None:
                if d.kind is not DisturbanceKind.PULSE:
                    out.append(f"disturbance.{i}: stop is only valid for Pulse")
                elif not d.start < d.stop:
                    out.append(f"disturbance.{i}: start must be < stop")
            elif d.kind is DisturbanceKind.PULSE:
                out.append(f"disturbance.{i}: Pulse requires stop")
            if not d.start < self.duration:
                out.append(f"disturbance.{i}: start must be < duration")
            if d.kind is DisturbanceKind.PARAMETER_SHIFT:
                if not d.magnitude > 0:
                    out.append(f"disturbance.{i}: ParameterShift magnitude must be positive")
                if 0 <= d.channel < len(self.channels) and not hasattr(
                    self.channels[d.channel].plant, d.parameter
                ):
                    out.append(f"disturbance.{i}: plant has no parameter {d.parameter!r}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ScenarioError(problems)
        return self


class TelemetryRecord(NamedTuple):
    t: float
    channel: int  # 1-based
    ref_v: float
    y_v: float
    u_v: float
    error_v: float
    kp_code: int
    ki_code: int
    kd_code: int
    mode: str
    event: str


TELEMETRY_HEADER = list(TelemetryRecord._fields)


class Telemetry:
    """Column store, one row per sample and channel."""

    def __init__(self, n_samples, n_channels, dt):
        self.dt = dt
        self.t = np.arange(n_samples) * dt
        shape = (n_samples, n_channels)
        self.ref_v = np.empty(shape)
        self.y_v = np.empty(shape)
        self.u_v = np.empty(shape)
        self.error_v = np.empty(shape)
        self.codes = np.empty(shape + (3,), dtype=np.int8)
        self.mode = np.empty(shape, dtype=np.int8)
        self.events = {}  # (sample, channel) -> [kind, ...]

    @property
    def n_channels(self):
        return self.y_v.shape[1]

    def __len__(self):
        return self.y_v.size

    def mode_of(self, c):
        return np.array([MODES[i].value for i in self.mode[:, c]])

    def records(self):
        n_ch = self.n_channels
        t = self.t.tolist()
        cols = [a.tolist() for a in (self.ref_v, self.y_v, self.u_v, self.error_v, self.codes, self.mode)]
        for k, tk in enumerate(t):
            for c in range(n_ch):
                code = cols[4][k][c]
                yield TelemetryRecord(
                    tk, c + 1, cols[0][k][c], cols[1][k][c], cols[2][k][c], cols[3][k][c],
                    code[0], code[1], code[2], MODES[cols[5][k][c]].value,
                    ";".join(self.events.get((k, c), ())),
                )


@dataclass
class Metrics:
    overshoot: float
    settling_time: float  # inf when the error never stays inside the band
    iae: float
    ise: float


def metrics_from_arrays(t, y_v, ref_v, epsilon_v) -> Metrics:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y_v, dtype=float)
    r = np.broadcast_to(np.asarray(ref_v, dtype=float), y.shape)
    e = r - y
    r_final = float(r[-1])
    span = r_final - float(y[0])
    sign = 1.0 if span >= 0 else -1.0
    over = step_overshoot(float(np.max(sign * (y - r))), span, r_final)
    outside = np.flatnonzero(np.abs(e) > epsilon_v)
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] == len(e) - 1:
        settling = math.inf
    else:
        settling = float(t[outside[-1] + 1] - t[0])
    iae = float(np.trapezoid(np.abs(e), t)) if len(t) > 1 else 0.0
    ise = float(np.trapezoid(e * e, t)) if len(t) > 1 else 0.0
    return Metrics(over, settling, iae, ise)


def compute_metrics(telemetry: Telemetry, channel: int, epsilon_v: float, t0=None, t1=None) -> Metrics:
    """Metrics of one channel (0-based) over samples with t0 <= t <= t1."""
    sel = slice(None)
    if t0 is not None or t1 is not None:
        lo = 0 if t0 is None else int(math.ceil(t0 / telemetry.dt - 1e-9))
        hi = len(telemetry.t) if t1 is None else int(math.floor(t1 / telemetry.dt + 1e-9)) + 1
        sel = slice(lo, hi)
    return metrics_from_arrays(
        telemetry.t[sel], telemetry.y_v[sel, channel], telemetry.ref_v[sel, channel], epsilon_v
    )


@dataclass
class SimResult:
    telemetry: Telemetry
    events: list
    metrics: list
    swarm_traces: list  # (channel 0-based, start time, SwarmTrace)
    codes: list  # final GainCode per channel


def _steady_state(ch: ChannelSpec):
    y = voltage_to_physical(ch.sensor, ch.reference_v)
    return y, ch.plant.steady_input(y)


def _live_plant(ch: ChannelSpec, y0) -> Plant:
    p = ch.plant
    if isinstance(p, FirstOrderPlant):
        return FirstOrderPlant(p.gain_K, p.tau_s, y0)
    if isinstance(p, SecondOrderPlant):
        return SecondOrderPlant(p.omega_n, p.zeta, p.gain_K, y0, 0.0)
    raise TypeError(f"unsupported plant {type(p).__name__}")


def run_scenario(s: Scenario) -> SimResult:
    """Simulate ``s``; every channel starts settled at its reference."""
    s.validate()
    n_ch = len(s.channels)
    dt = s.dt
    steps = s.n_steps
    plants = []
    u_ss = []
    for ch in s.channels:
        y0, u0 = _steady_state(ch)
        plants.append(_live_plant(ch, y0))
        u_ss.append(u0)
    bank = ControllerBank(
        [ch.initial_code for ch in s.channels],
        s.ladder,
        dt,
        [ch.u_min for ch in s.channels],
        [ch.u_max for ch in s.channels],
        s.d_filter_N,
        s.anti_windup,
    )
    for c, u0 in enumerate(u_ss):
        bank.hold_at(c, u0)

    refs = np.array([ch.reference_v for ch in s.channels])
    sensors = [ch.sensor for ch in s.channels]
    states = [ChannelState() for _ in range(n_ch)]
    alloc = TunerAllocator(s.tuning_duration)

    signal = []  # (channel, start_k, stop_k or None, volts)
    shifts = []  # (start_k, channel, parameter, factor)
    for d in s.disturbances:
        k0 = int(round(d.start / dt))
        if d.kind is DisturbanceKind.PARAMETER_SHIFT:
            shifts.append((k0, d.channel, d.parameter, d.magnitude))
        else:
            k1 = None if d.stop is None else int(round(d.stop / dt))
            signal.append((d.channel, k0, k1, d.magnitude))
    shifts.sort(key=lambda x: x[0])

    tel = Telemetry(steps + 1, n_ch, dt)
    events = []
    traces = []
    pending = {}
    tunings = [0] * n_ch
    y_v = np.empty(n_ch)
    mode_idx = np.empty(n_ch, dtype=np.int8)

    for k in range(steps + 1):
        t = k * dt
        while shifts and shifts[0][0] <= k:
            _, c, param, factor = shifts.pop(0)
            setattr(plants[c], param, getattr(plants[c], param) * factor)
            plants[c].invalidate()

        for c in range(n_ch):
            v = sensors[c].unclamped(plants[c].y)
            for sc, k0, k1, mag in signal:
                if sc == c and k >= k0 and (k1 is None or k < k1):
                    v += mag
            y_v[c] = min(max(v, sensors[c].v_min), sensors[c].v_max)
        errors = refs - y_v

        step_events = supervise_step(states, errors, t, alloc, s.supervisor)
        for ev in step_events:
            c = ev.channel
            tel.events.setdefault((k, c), []).append(ev.kind.value)
            if ev.kind is EventKind.TUNING_STARTED:
                replica = TuningChannel(
                    plants[c],
                    sensors[c],
                    s.channels[c].reference_v,
                    PidConfig(dt, s.channels[c].u_min, s.channels[c].u_max, s.d_filter_N, s.anti_windup),
                    s.window,
                )
                rng = np.random.default_rng([s.seed, c, tunings[c]])
                tunings[c] += 1
                code, trace = run_pso(replica, s.pso, s.weights, s.ladder, rng=rng)
                pending[c] = code
                traces.append((c, t, trace))
        events.extend(step_events)

        u = bank.step(errors)

        for c in range(n_ch):
            mode_idx[c] = _MODE_INDEX[states[c].mode]
            tel.codes[k, c] = bank.codes[c].as_tuple()
        tel.ref_v[k] = refs
        tel.y_v[k] = y_v
        tel.u_v[k] = u
        tel.error_v[k] = errors
        tel.mode[k] = mode_idx

        for ev in step_events:
            if ev.kind is EventKind.TUNING_FINISHED:
                install_gains(bank, ev.channel, pending.pop(ev.channel))

        if k < steps:
            for c in range(n_ch):
                plants[c].step(float(u[c]), dt)

    metrics = [compute_metrics(tel, c, s.supervisor.epsilon_v) for c in range(n_ch)]
    return SimResult(tel, events, metrics, traces, list(bank.codes))

