"""Plant models and sensor voltage maps for the three channel devices.

Plant state may be a float or a numpy array; array state lets one plant
object stand in for a batch of independent replicas (one per PSO particle).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


class SensorKind(str, enum.Enum):
    TEMPERATURE = "temperature"
    GYROSCOPE = "gyroscope"
    TACHOMETER = "tachometer"


class OutOfRangeError(ValueError):
    """Voltage outside the sensor's output swing."""


@dataclass(frozen=True)
class SensorMap:
    kind: SensorKind
    scale: float  # volts per physical unit
    offset_volts: float  # voltage at zero_reference
    v_min: float
    v_max: float
    physical_min: float
    physical_max: float
    zero_reference: float = 0.0

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be < v_max")
        if not self.physical_min < self.physical_max:
            raise ValueError("physical_min must be < physical_max")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        span_v = self.scale * (self.physical_max - self.physical_min)
        if abs(span_v - (self.v_max - self.v_min)) > 1e-6:
            raise ValueError(
                f"scale x physical span = {span_v!r} V does not match "
                f"swing {self.v_max - self.v_min!r} V"
            )

    def unclamped(self, x):
        return self.offset_volts + self.scale * (x - self.zero_reference)


def sensor_to_voltage(smap: SensorMap, x):
    """Physical value to sensor voltage, saturating at the output swing."""
    v = smap.unclamped(x)
    if isinstance(v, np.ndarray):
        return np.clip(v, smap.v_min, smap.v_max)
    return min(max(v, smap.v_min), smap.v_max)


def voltage_to_physical(smap: SensorMap, v):
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < smap.v_min) or np.any(v_arr > smap.v_max):
        raise OutOfRangeError(
            f"{v!r} V outside swing [{smap.v_min}, {smap.v_max}] V of {smap.kind.value}"
        )
    x = smap.zero_reference + (v_arr - smap.offset_volts) / smap.scale
    return float(x) if x.ndim == 0 else x


def temperature_map(scale=0.0225, physical_min=-50.0, span=200.0) -> SensorMap:
    """AD22100-style map: 22.5 mV/C, 0.25 V at the bottom of a 200 C span."""
    return SensorMap(
        kind=SensorKind.TEMPERATURE,
        scale=scale,
        offset_volts=0.25,
        v_min=0.25,
        v_max=0.25 + scale * span,
        physical_min=physical_min,
        physical_max=physical_min + span,
        zero_reference=physical_min,
    )


def gyroscope_map(scale=0.10742, v_min=0.0, v_max=5.0) -> SensorMap:
    """Rate gyro centred on mid-swing; 0 rad/s reads 2.5 V.

    The physical range is derived from the swing, which puts it at
    +/-23.273 rad/s (the 23.27 figure rounded).
    """
    mid = 0.5 * (v_min + v_max)
    half = 0.5 * (v_max - v_min) / scale
    return SensorMap(
        kind=SensorKind.GYROSCOPE,
        scale=scale,
        offset_volts=mid,
        v_min=v_min,
        v_max=v_max,
        physical_min=-half,
        physical_max=half,
    )


def tachometer_map(max_rpm=3000.0, v_max=5.0) -> SensorMap:
    """Motor speed in RPM mapped linearly onto 0..v_max."""
    return SensorMap(
        kind=SensorKind.TACHOMETER,
        scale=v_max / max_rpm,
        offset_volts=0.0,
        v_min=0.0,
        v_max=v_max,
        physical_min=0.0,
        physical_max=max_rpm,
    )


@dataclass(frozen=True)
class TachSpec:
    teeth_N: int
    rpm: float

    def __post_init__(self):
        if self.teeth_N < 1:
            raise ValueError("teeth_N must be >= 1")
        if self.rpm < 0:
            raise ValueError("rpm must be >= 0")


def tach_frequency(spec: TachSpec) -> float:
    """Pulse frequency in Hz of a toothed-shaft tachometer."""
    return spec.rpm * spec.teeth_N / 60.0


def _check_dt(dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")


@dataclass
class FirstOrderPlant:
    """K / (tau s + 1) with zero-order-hold input."""

    gain_K: float
    tau_s: float
    y: float | np.ndarray = 0.0
    _decay: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tau_s > 0:
            raise ValueError("tau_s must be positive")

    @property
    def output(self):
        return self.y

    def step(self, u, dt):
        a = self._decay.get(dt)
        if a is None:
            _check_dt(dt)
            a = self._decay[dt] = math.exp(-dt / self.tau_s)
        self.y = a * self.y + self.gain_K * (1.0 - a) * u
        return self.y

    def invalidate(self):
        self._decay.clear()

    def replica(self, batch: int | None = None) -> "FirstOrderPlant":
        """Same parameters, quiescent state (array state when batch is given)."""
        y0 = 0.0 if batch is None else np.zeros(batch)
        return FirstOrderPlant(self.gain_K, self.tau_s, y0)

    def steady_input(self, y):
        return y / self.gain_K


@dataclass
class SecondOrderPlant:
    """K wn^2 / (s^2 + 2 zeta wn s + wn^2), state (y, y')."""

    omega_n: float
    zeta: float
    gain_K: float
    y: float | np.ndarray = 0.0
    ydot: float | np.ndarray = 0.0
    _coeffs: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.omega_n > 0:
            raise ValueError("omega_n must be positive")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")

    @property
    def output(self):
        return self.y

    def matrices(self):
        wn, z = self.omega_n, self.zeta
        A = np.array([[0.0, 1.0], [-wn * wn, -2.0 * z * wn]])
        B = np.array([[0.0], [self.gain_K * wn * wn]])
        return A, B

    def discretize(self, dt):
        _check_dt(dt)
        A, B = self.matrices()
        M = np.zeros((3, 3))
        M[:2, :2] = A
        M[:2, 2:] = B
        E = expm(M * dt)
        Ad, Bd = E[:2, :2], E[:2, 2]
        return tuple(float(c) for c in (*Ad.ravel(), *Bd))

    def step(self, u, dt):
        c = self._coeffs.get(dt)
        if c is None:
            c = self._coeffs[dt] = self.discretize(dt)
        a00, a01, a10, a11, b0, b1 = c
        y, yd = self.y, self.ydot
        self.y = a00 * y + a01 * yd + b0 * u
        self.ydot = a10 * y + a11 * yd + b1 * u
        return self.y

    def invalidate(self):
        self._coeffs.clear()

    def replica(self, batch: int | None = None) -> "SecondOrderPlant":
        z = 0.0 if batch is None else np.zeros(batch)
        zd = 0.0 if batch is None else np.zeros(batch)
        return SecondOrderPlant(self.omega_n, self.zeta, self.gain_K, z, zd)

    def steady_input(self, y):
        return y / self.gain_K


Plant = FirstOrderPlant | SecondOrderPlant


def step_plant(plant: Plant, u, dt):
    """Advance ``plant`` by one held-input step of ``dt`` and return its output."""
    return plant.step(u, dt)


def motor_plant(max_rpm=3000.0, v_drive=5.0, tau_s=0.5) -> FirstOrderPlant:
    return FirstOrderPlant(gain_K=max_rpm / v_drive, tau_s=tau_s)


def temperature_plant(gain_K=40.0, tau_s=20.0) -> FirstOrderPlant:
    return FirstOrderPlant(gain_K=gain_K, tau_s=tau_s)


def gyroscope_plant(omega_n=20.0, zeta=0.7, gain_K=1.0 / 0.10742) -> SecondOrderPlant:
    return SecondOrderPlant(omega_n=omega_n, zeta=zeta, gain_K=gain_K)
