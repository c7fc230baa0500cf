"""Disturbance detection, two-tier recovery and the shared tuner queue.

Each channel's comparator watches |reference - output|.  A disturbance
first gets ``t_o`` seconds of plain PID recovery; if the comparator has not
cleared by then the channel queues for the single PSO tuner, which serves
channels one at a time in arrival order.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .pid import ComponentLadder, GainCode, PidConfig, PidGains, PidState, decode_gains, pid_step

_T_EPS = 1e-9


class Mode(str, enum.Enum):
    NOMINAL = "Nominal"
    PID_RECOVERY = "PidRecovery"
    AWAITING_TUNER = "AwaitingTuner"
    TUNING = "Tuning"


class EventKind(str, enum.Enum):
    DISTURBANCE_DETECTED = "DisturbanceDetected"
    PID_RECOVERED = "PidRecovered"
    ESCALATED_TO_PSO = "EscalatedToPso"
    REQUEUED = "Requeued"  # escalated while the tuner is busy; waits in the queue
    TUNING_STARTED = "TuningStarted"
    TUNING_FINISHED = "TuningFinished"


@dataclass
class SupervisorConfig:
    epsilon_v: float = 0.2
    hysteresis_v: float = 0.05
    t_o: float = 15.0
    n_channels: int = 3

    def __post_init__(self):
        if not self.epsilon_v > 0:
            raise ValueError("epsilon_v must be positive")
        if not 0 <= self.hysteresis_v < self.epsilon_v:
            raise ValueError("hysteresis_v must lie in [0, epsilon_v)")
        if not self.t_o > 0:
            raise ValueError("t_o must be positive")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")


@dataclass
class ChannelState:
    mode: Mode = Mode.NOMINAL
    mode_entered_at: float = 0.0
    pending_deadline: float | None = None
    disturbed: bool = False

    def enter(self, mode: Mode, t: float):
        self.mode = mode
        self.mode_entered_at = t
        self.pending_deadline = None


@dataclass
class TunerAllocator:
    tuning_duration: float
    queue: deque = field(default_factory=deque)
    active: int | None = None
    busy_until: float | None = None

    def check(self):
        if len(set(self.queue)) != len(self.queue):
            raise AssertionError(f"channel queued twice: {list(self.queue)}")
        if self.active is not None and self.active in self.queue:
            raise AssertionError(f"active channel {self.active} is also queued")
        if (self.active is None) != (self.busy_until is None):
            raise AssertionError("allocator active/busy_until out of sync")


@dataclass(frozen=True)
class SupervisorEvent:
    time: float
    channel: int
    kind: EventKind


def compare(y_v, ref_v, config: SupervisorConfig, was_disturbed: bool) -> bool:
    """Comparator with hysteresis on the release side."""
    err = abs(y_v - ref_v)
    if was_disturbed:
        return not err < config.epsilon_v - config.hysteresis_v
    return err > config.epsilon_v


def supervise_step(states, errors, t, alloc: TunerAllocator, config: SupervisorConfig):
    """Advance every channel's state machine by one sample.

    ``errors`` are reference-minus-output voltages.  Transitions are decided
    from the modes held on entry; states and the allocator are updated in
    place and the list of emitted events is returned.
    """
    alloc.check()
    events = []
    touched = set()

    if alloc.active is not None and t + _T_EPS >= alloc.busy_until:
        c = alloc.active
        if states[c].mode is not Mode.TUNING:
            raise AssertionError(f"active channel {c} is in mode {states[c].mode}")
        states[c].enter(Mode.NOMINAL, t)
        states[c].disturbed = False
        alloc.active = alloc.busy_until = None
        events.append(SupervisorEvent(t, c, EventKind.TUNING_FINISHED))
        touched.add(c)

    for c, st in enumerate(states):
        if c in touched:
            continue
        e = errors[c]
        if st.mode is Mode.NOMINAL:
            st.disturbed = compare(e, 0.0, config, False)
            if st.disturbed:
                st.enter(Mode.PID_RECOVERY, t)
                st.pending_deadline = t + config.t_o
                events.append(SupervisorEvent(t, c, EventKind.DISTURBANCE_DETECTED))
        elif st.mode is Mode.PID_RECOVERY:
            st.disturbed = compare(e, 0.0, config, True)
            if not st.disturbed:
                st.enter(Mode.NOMINAL, t)
                events.append(SupervisorEvent(t, c, EventKind.PID_RECOVERED))
            elif t + _T_EPS >= st.pending_deadline:
                st.enter(Mode.AWAITING_TUNER, t)
                alloc.queue.append(c)
                events.append(SupervisorEvent(t, c, EventKind.ESCALATED_TO_PSO))
                if alloc.active is not None or len(alloc.queue) > 1:
                    events.append(SupervisorEvent(t, c, EventKind.REQUEUED))
        elif st.mode is Mode.AWAITING_TUNER:
            if c not in alloc.queue:
                raise AssertionError(f"channel {c} awaiting the tuner but not queued")

    if alloc.active is None and alloc.queue:
        c = alloc.queue.popleft()
        states[c].enter(Mode.TUNING, t)
        alloc.active = c
        alloc.busy_until = t + alloc.tuning_duration
        events.append(SupervisorEvent(t, c, EventKind.TUNING_STARTED))

    alloc.check()
    return events


class ControllerBank:
    """The per-channel PID controllers, stepped together as one batch."""

    def __init__(self, codes, ladder: ComponentLadder, dt, u_min, u_max, d_filter_N=10.0,
                 anti_windup="clamp"):
        n = len(codes)
        self.ladder = ladder
        self.codes = list(codes)
        self.config = PidConfig(
            dt=dt,
            u_min=np.asarray(u_min, dtype=float),
            u_max=np.asarray(u_max, dtype=float),
            d_filter_N=d_filter_N,
            anti_windup=anti_windup,
        )
        self.gains = PidGains(np.zeros(n), np.zeros(n), np.zeros(n))
        for c, code in enumerate(self.codes):
            self._set(c, code)
        self.state = PidState.zeros(n)

    def _set(self, c, code):
        g = decode_gains(code, self.ladder)
        self.gains.kp[c], self.gains.ki[c], self.gains.kd[c] = g.kp, g.ki, g.kd

    def step(self, errors):
        return pid_step(self.state, np.asarray(errors, dtype=float), self.gains, self.config)

    def hold_at(self, c, u):
        """Preload channel ``c`` so that zero error yields output ``u``."""
        self.state.integrator[c] = u / self.gains.ki[c]
        self.state.prev_error[c] = 0.0
        self.state.d_filter_state[c] = 0.0


def install_gains(bank: ControllerBank, channel: int, code: GainCode) -> ControllerBank:
    """Program a new code into one channel without a jump in its integral term."""
    old_ki = bank.gains.ki[channel]
    bank.codes[channel] = code
    bank._set(channel, code)
    bank.state.integrator[channel] *= old_ki / bank.gains.ki[channel]
    return bank
