"""Discrete PID controller with gains drawn from a 4-bit component lattice.

Each gain is set by one resistor ladder with 16 taps:

    kp = R2(code) / R1        ki = 1 / (Ri(code) * Ci)        kd = Rd(code) * Cd

Ladders are linear in resistance, so kp and kd rise with their code while
ki falls with its code.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

N_LEVELS = 16
_TIE_RTOL = 1e-12


class ControllerFault(ArithmeticError):
    pass


@dataclass(frozen=True)
class ComponentLadder:
    r1_fixed: float = 10e3
    r2_min: float = 1e3
    r2_max: float = 100e3
    ri_min: float = 50e3
    ri_max: float = 10e6
    ci_fixed: float = 1e-6
    rd_min: float = 1e3
    rd_max: float = 500e3
    cd_fixed: float = 1e-6

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"ladder component {name} must be positive")
        for lo, hi in (("r2_min", "r2_max"), ("ri_min", "ri_max"), ("rd_min", "rd_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise ValueError(f"ladder {lo} must be < {hi}")

    @staticmethod
    def _tap(lo, hi, code):
        return lo + np.asarray(code) * (hi - lo) / (N_LEVELS - 1)

    def kp_of(self, code):
        return self._tap(self.r2_min, self.r2_max, code) / self.r1_fixed

    def ki_of(self, code):
        return 1.0 / (self._tap(self.ri_min, self.ri_max, code) * self.ci_fixed)

    def kd_of(self, code):
        return self._tap(self.rd_min, self.rd_max, code) * self.cd_fixed

    def lattice(self):
        """(kp, ki, kd) value arrays, each indexed by code 0..15."""
        codes = np.arange(N_LEVELS)
        return self.kp_of(codes), self.ki_of(codes), self.kd_of(codes)

    def gain_bounds(self):
        kp, ki, kd = self.lattice()
        lo = np.array([kp.min(), ki.min(), kd.min()])
        hi = np.array([kp.max(), ki.max(), kd.max()])
        return lo, hi


@dataclass(frozen=True)
class GainCode:
    kp_code: int
    ki_code: int
    kd_code: int

    def __post_init__(self):
        for name in ("kp_code", "ki_code", "kd_code"):
            c = getattr(self, name)
            if not (isinstance(c, (int, np.integer)) and 0 <= c < N_LEVELS):
                raise ValueError(f"{name} must be an integer in [0, 15], got {c!r}")

    def as_tuple(self):
        return (int(self.kp_code), int(self.ki_code), int(self.kd_code))

    @property
    def register(self) -> int:
        """The 12-bit register word, kp in the high nibble."""
        return (int(self.kp_code) << 8) | (int(self.ki_code) << 4) | int(self.kd_code)

    @classmethod
    def from_register(cls, word: int) -> "GainCode":
        if not 0 <= word < 1 << 12:
            raise ValueError("register word must fit in 12 bits")
        return cls((word >> 8) & 0xF, (word >> 4) & 0xF, word & 0xF)


@dataclass
class PidGains:
    kp: float | np.ndarray
    ki: float | np.ndarray
    kd: float | np.ndarray

    def as_array(self):
        return np.array([self.kp, self.ki, self.kd], dtype=float)


def decode_gains(code: GainCode, ladder: ComponentLadder) -> PidGains:
    return PidGains(
        kp=float(ladder.kp_of(code.kp_code)),
        ki=float(ladder.ki_of(code.ki_code)),
        kd=float(ladder.kd_of(code.kd_code)),
    )


def decode_codes(codes, ladder: ComponentLadder) -> np.ndarray:
    """Vectorized decode of an (n, 3) integer code array into (n, 3) gains."""
    codes = np.asarray(codes)
    return np.stack(
        [ladder.kp_of(codes[..., 0]), ladder.ki_of(codes[..., 1]), ladder.kd_of(codes[..., 2])],
        axis=-1,
    )


def _nearest(values: np.ndarray, target: float) -> int:
    dist = np.abs(values - target)
    tol = _TIE_RTOL * max(1.0, abs(target))
    # codes scan upward, so the first hit is the lowest code among ties
    return int(np.flatnonzero(dist <= dist.min() + tol)[0])


def encode_gains(target: PidGains, ladder: ComponentLadder) -> GainCode:
    """Nearest realizable code per axis; ties go to the lower code."""
    kp, ki, kd = ladder.lattice()
    return GainCode(
        _nearest(kp, float(target.kp)),
        _nearest(ki, float(target.ki)),
        _nearest(kd, float(target.kd)),
    )


class AntiWindup(str, enum.Enum):
    CLAMP = "clamp"
    CONDITIONAL = "conditional"


@dataclass
class PidConfig:
    dt: float = 1e-3
    u_min: float | np.ndarray = 0.0
    u_max: float | np.ndarray = 5.0
    d_filter_N: float = 10.0
    anti_windup: AntiWindup = AntiWindup.CLAMP

    def __post_init__(self):
        self.anti_windup = AntiWindup(self.anti_windup)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.asarray(self.u_min) < np.asarray(self.u_max)):
            raise ValueError("u_min must be < u_max")
        if not self.d_filter_N > 0:
            raise ValueError("d_filter_N must be positive")


@dataclass
class PidState:
    integrator: float | np.ndarray = 0.0  # V*s
    prev_error: float | np.ndarray = 0.0
    d_filter_state: float | np.ndarray = 0.0  # V/s

    @classmethod
    def zeros(cls, batch: int | None = None) -> "PidState":
        if batch is None:
            return cls()
        return cls(np.zeros(batch), np.zeros(batch), np.zeros(batch))


def reset(state: PidState) -> PidState:
    for name in ("integrator", "prev_error", "d_filter_state"):
        value = getattr(state, name)
        setattr(state, name, np.zeros_like(value) if isinstance(value, np.ndarray) else 0.0)
    return state


def pid_step(state: PidState, error, gains: PidGains, config: PidConfig):
    """One sample of kp*e + ki*integral(e) + kd*de/dt, saturated.

    The integral is trapezoidal. The derivative is a backward difference
    through a first-order filter with time constant (kd/kp)/N. ``state`` is
    updated in place; scalars and equal-shape arrays are both accepted.
    """
    e = error
    if not np.isfinite(e).all():
        raise ControllerFault(f"non-finite error signal: {error!r}")
    dt = config.dt
    kp, ki, kd = gains.kp, gains.ki, gains.kd

    if isinstance(kp, np.ndarray):
        tf = np.divide(kd, config.d_filter_N * kp, out=np.zeros_like(kp, dtype=float), where=kp > 0)
    else:
        tf = kd / (config.d_filter_N * kp) if kp > 0 else 0.0
    d = (tf * state.d_filter_state + (e - state.prev_error)) / (tf + dt)

    i_prev = state.integrator
    i_next = i_prev + 0.5 * (e + state.prev_error) * dt
    u_pd = kp * e + kd * d
    u_raw = u_pd + ki * i_next

    hi, lo = config.u_max, config.u_min
    if config.anti_windup is AntiWindup.CLAMP:
        hold = ((u_raw > hi) & (e > 0)) | ((u_raw < lo) & (e < 0))
    else:
        hold = (u_raw > hi) | (u_raw < lo)
    if np.any(hold):
        i_next = np.where(hold, i_prev, i_next)
        if i_next.ndim == 0:
            i_next = float(i_next)
        u_raw = u_pd + ki * i_next

    state.integrator = i_next
    state.prev_error = e
    state.d_filter_state = d
    if isinstance(u_raw, np.ndarray):
        return np.minimum(np.maximum(u_raw, lo), hi)
    return float(min(max(u_raw, lo), hi))
