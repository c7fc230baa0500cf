"""Particle swarm search over (kp, ki, kd) for one control channel.

Candidates are scored by simulating a quiescent replica of the channel
through a step to its reference.  All particles of an iteration are
simulated together as one numpy batch, so draws and reductions happen in a
fixed particle order and batching cannot change the result.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pid import (
    N_LEVELS,
    ComponentLadder,
    GainCode,
    PidConfig,
    PidGains,
    PidState,
    decode_codes,
    decode_gains,
    encode_gains,
    pid_step,
)
from .plants import Plant, SensorMap, sensor_to_voltage

DIVERGED_FITNESS = 1e9

Objective = Callable[[np.ndarray], np.ndarray]


@dataclass
class FitnessWeights:
    alpha: float = 1.0  # overshoot
    beta: float = 1.0  # integrated absolute error

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or not self.alpha + self.beta > 0:
            raise ValueError("fitness weights must be non-negative with a positive sum")


@dataclass
class PsoConfig:
    n_particles: int = 50
    n_iterations: int = 50
    w: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    bounds_lo: np.ndarray = field(default_factory=lambda: ComponentLadder().gain_bounds()[0])
    bounds_hi: np.ndarray = field(default_factory=lambda: ComponentLadder().gain_bounds()[1])
    v_max: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        self.bounds_lo = np.asarray(self.bounds_lo, dtype=float)
        self.bounds_hi = np.asarray(self.bounds_hi, dtype=float)
        if self.v_max is None:
            self.v_max = 0.25 * (self.bounds_hi - self.bounds_lo)
        self.v_max = np.asarray(self.v_max, dtype=float)
        if self.n_particles < 1 or self.n_iterations < 1:
            raise ValueError("n_particles and n_iterations must be >= 1")
        if self.bounds_lo.shape != (3,) or self.bounds_hi.shape != (3,):
            raise ValueError("bounds must be 3-vectors")
        if not np.all(self.bounds_lo < self.bounds_hi):
            raise ValueError("bounds_lo must be < bounds_hi componentwise")
        if min(self.w, self.c1, self.c2) < 0:
            raise ValueError("w, c1, c2 must be non-negative")


def step_overshoot(y_peak_excess, span, reference):
    """Peak excess over the reference as a fraction of the step span.

    A zero-span step is normalized by the reference level instead, and by
    1 V when that is zero too.
    """
    denom = abs(span) or abs(reference) or 1.0
    return max(0.0, y_peak_excess) / denom


@dataclass
class TuningChannel:
    """Model replica of one channel, used to score candidate gains."""

    plant: Plant
    sensor: SensorMap
    reference_v: float
    pid: PidConfig = field(default_factory=PidConfig)
    window: float = 5.0

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("evaluation window must be positive")

    @property
    def dt(self):
        return self.pid.dt

    @property
    def n_steps(self):
        return int(round(self.window / self.dt))

    def quiescent_voltage(self):
        return sensor_to_voltage(self.sensor, self.plant.replica().output)

    def simulate(self, gains: np.ndarray, record=False):
        """Step response of every row of ``gains`` (n, 3).

        Returns (iae, peak_excess, diverged) arrays, plus the (n, steps+1)
        output-voltage history when ``record`` is set.
        """
        gains = np.atleast_2d(np.asarray(gains, dtype=float))
        n = gains.shape[0]
        plant = self.plant.replica(n)
        state = PidState.zeros(n)
        pg = PidGains(gains[:, 0].copy(), gains[:, 1].copy(), gains[:, 2].copy())
        r = self.reference_v
        sign = 1.0 if r >= self.quiescent_voltage() else -1.0
        limit = 10.0 * (self.sensor.v_max - self.sensor.v_min)
        steps = self.n_steps
        abs_sum = np.zeros(n)
        peak = np.full(n, -np.inf)
        diverged = np.zeros(n, dtype=bool)
        hist = np.empty((n, steps + 1)) if record else None
        v_lo, v_hi = self.sensor.v_min, self.sensor.v_max
        e_first = None
        for k in range(steps + 1):
            v_raw = self.sensor.unclamped(plant.output)
            diverged |= ~(np.abs(v_raw) <= limit)
            y_v = np.minimum(np.maximum(v_raw, v_lo), v_hi)
            e = r - y_v
            ae = np.abs(e)
            abs_sum += ae
            if k == 0:
                e_first = ae
            np.maximum(peak, sign * (y_v - r), out=peak)
            if record:
                hist[:, k] = y_v
            if k == steps:
                break
            if diverged.any():
                e = np.where(diverged, 0.0, e)
            u = pid_step(state, e, pg, self.pid)
            plant.step(u, self.dt)
        iae = self.dt * (abs_sum - 0.5 * (e_first + ae))
        if record:
            return iae, peak, diverged, hist
        return iae, peak, diverged


def evaluate_fitness(x, channel: TuningChannel, weights: FitnessWeights):
    """beta * IAE + alpha * overshoot for each gain row in ``x``.

    Returns a float for a single 3-vector, else an array.
    """
    single = np.ndim(x) == 1
    iae, peak, diverged = channel.simulate(x)
    span = channel.reference_v - channel.quiescent_voltage()
    over = np.array([step_overshoot(p, span, channel.reference_v) for p in peak])
    f = weights.beta * iae + weights.alpha * over
    f = np.where(diverged | ~np.isfinite(f), DIVERGED_FITNESS, f)
    return float(f[0]) if single else f


def channel_objective(channel: TuningChannel, weights: FitnessWeights) -> Objective:
    return lambda x: evaluate_fitness(np.atleast_2d(x), channel, weights)


@dataclass
class Particle:
    x: np.ndarray
    v: np.ndarray
    x_local_best: np.ndarray
    f_local_best: float


@dataclass
class Swarm:
    x: np.ndarray  # (n, 3)
    v: np.ndarray
    x_local_best: np.ndarray
    f_local_best: np.ndarray  # (n,)
    x_global_best: np.ndarray  # (3,)
    f_global_best: float
    f_current: np.ndarray = None

    def __len__(self):
        return len(self.x)

    def particle(self, i: int) -> Particle:
        return Particle(
            self.x[i].copy(), self.v[i].copy(), self.x_local_best[i].copy(), float(self.f_local_best[i])
        )


def init_swarm(config: PsoConfig, rng: np.random.Generator, objective: Objective) -> Swarm:
    lo, hi, vmax = config.bounds_lo, config.bounds_hi, config.v_max
    n = config.n_particles
    x = lo + (hi - lo) * rng.random((n, 3))
    np.clip(x, lo, hi, out=x)
    v = -vmax + 2.0 * vmax * rng.random((n, 3))
    f = np.asarray(objective(x), dtype=float)
    g = int(np.argmin(f))
    return Swarm(x, v, x.copy(), f.copy(), x[g].copy(), float(f[g]), f)


def update_velocity(x, v, x_local_best, x_global_best, config: PsoConfig, r1, r2):
    """Inertia plus random pulls toward the particle's best and the swarm's best."""
    v_new = (
        config.w * v
        + config.c1 * (r1 * (x_local_best - x))
        + config.c2 * (r2 * (x_global_best - x))
    )
    return np.clip(v_new, -config.v_max, config.v_max)


def update_position(x, v_new, config: PsoConfig):
    """Move by ``v_new`` and clamp to the bounds; velocity is zeroed where clamped."""
    moved = x + v_new
    x_new = np.clip(moved, config.bounds_lo, config.bounds_hi)
    v_out = np.where(x_new != moved, 0.0, v_new)
    return x_new, v_out


@dataclass
class SwarmTrace:
    iterations: list = field(default_factory=list)  # (iteration, x_gbest, f_gbest)
    best_continuous: np.ndarray | None = None
    code: GainCode | None = None
    quantized_gains: np.ndarray | None = None
    quantized_fitness: float | None = None

    @property
    def fitness(self):
        return np.array([f for _, _, f in self.iterations])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "kp", "ki", "kd", "fitness"])
        for it, xb, f in self.iterations:
            w.writerow([it, repr(float(xb[0])), repr(float(xb[1])), repr(float(xb[2])), repr(float(f))])
        return buf.getvalue()


def run_pso(
    objective: Objective | TuningChannel,
    config: PsoConfig,
    weights: FitnessWeights | None = None,
    ladder: ComponentLadder | None = None,
    rng: np.random.Generator | None = None,
):
    """Minimize ``objective`` and return (GainCode or None, SwarmTrace).

    Iteration 1 scores the initial swarm; each later iteration moves every
    particle once and rescores.  With a ladder, the final continuous best is
    snapped to the nearest code and that code's gains are rescored.
    """
    if isinstance(objective, TuningChannel):
        objective = channel_objective(objective, weights or FitnessWeights())
    if rng is None:
        rng = np.random.default_rng(config.seed)
    swarm = init_swarm(config, rng, objective)
    trace = SwarmTrace()
    trace.iterations.append((1, swarm.x_global_best.copy(), swarm.f_global_best))
    n = config.n_particles
    for it in range(2, config.n_iterations + 1):
        draws = rng.random((n, 6))
        v_new = update_velocity(
            swarm.x, swarm.v, swarm.x_local_best, swarm.x_global_best, config, draws[:, :3], draws[:, 3:]
        )
        swarm.x, swarm.v = update_position(swarm.x, v_new, config)
        f = np.asarray(objective(swarm.x), dtype=float)
        swarm.f_current = f
        better = f < swarm.f_local_best
        swarm.x_local_best[better] = swarm.x[better]
        swarm.f_local_best[better] = f[better]
        g = int(np.argmin(swarm.f_local_best))
        if swarm.f_local_best[g] < swarm.f_global_best:
            swarm.f_global_best = float(swarm.f_local_best[g])
            swarm.x_global_best = swarm.x_local_best[g].copy()
        trace.iterations.append((it, swarm.x_global_best.copy(), swarm.f_global_best))
    trace.best_continuous = swarm.x_global_best.copy()
    if ladder is not None:
        code = encode_gains(PidGains(*trace.best_continuous), ladder)
        trace.code = code
        trace.quantized_gains = decode_gains(code, ladder).as_array()
        trace.quantized_fitness = float(np.asarray(objective(trace.quantized_gains[None, :]))[0])
    return trace.code, trace


def all_codes() -> np.ndarray:
    """Every GainCode as a (4096, 3) array, in register order."""
    c = np.arange(N_LEVELS)
    return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)


def exhaustive_search(objective: Objective | TuningChannel, ladder: ComponentLadder, weights=None):
    """Score all 4096 codes; return (best GainCode, its fitness, all fitnesses)."""
    if isinstance(objective, TuningChannel):
        objective = channel_objective(objective, weights or FitnessWeights())
    codes = all_codes()
    f = np.asarray(objective(decode_codes(codes, ladder)), dtype=float)
    i = int(np.argmin(f))
    return GainCode(*(int(c) for c in codes[i])), float(f[i]), f


def iterations_to_threshold(fitness: np.ndarray, rel=0.05) -> int:
    """First (1-based) iteration whose best fitness is within ``rel`` of the final best."""
    final = fitness[-1]
    hit = np.flatnonzero(fitness <= final + rel * abs(final))
    return int(hit[0]) + 1


@dataclass
class StudyRow:
    particles: int
    iterations_to_threshold: int
    seconds: float


def convergence_study(particle_counts, config: PsoConfig, objective: Objective | TuningChannel, weights=None):
    """Time-to-convergence of the swarm as its size varies."""
    if not particle_counts:
        raise ValueError("particle_counts must be non-empty")
    if isinstance(objective, TuningChannel):
        objective = channel_objective(objective, weights or FitnessWeights())
    rows = []
    for count in particle_counts:
        cfg = PsoConfig(
            n_particles=int(count),
            n_iterations=config.n_iterations,
            w=config.w,
            c1=config.c1,
            c2=config.c2,
            bounds_lo=config.bounds_lo,
            bounds_hi=config.bounds_hi,
            v_max=config.v_max,
            seed=config.seed,
        )
        start = time.perf_counter()
        _, trace = run_pso(objective, cfg)
        elapsed = time.perf_counter() - start
        rows.append(StudyRow(int(count), iterations_to_threshold(trace.fitness), elapsed))
    return rows


def study_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["particles", "iterations_to_threshold", "seconds"])
    for r in rows:
        w.writerow([r.particles, r.iterations_to_threshold, repr(r.seconds)])
    return buf.getvalue()


def sphere(center, scale=1.0, offset=0.0) -> Objective:
    """Synthetic convex objective: offset + sum(((x - center) / scale)**2)."""
    center = np.asarray(center, dtype=float)
    scale = np.asarray(scale, dtype=float)

    def f(x):
        d = (np.atleast_2d(x) - center) / scale
        return offset + np.sum(d * d, axis=-1)

    return f
