import csv
import io
import math

import numpy as np
import pytest

from swarmpid.pid import ComponentLadder, GainCode, PidConfig, decode_gains
from swarmpid.plants import gyroscope_map, gyroscope_plant, motor_plant, tachometer_map
from swarmpid.pso import (
    DIVERGED_FITNESS,
    FitnessWeights,
    PsoConfig,
    TuningChannel,
    convergence_study,
    evaluate_fitness,
    exhaustive_search,
    init_swarm,
    iterations_to_threshold,
    run_pso,
    sphere,
    step_overshoot,
    study_to_csv,
    update_position,
    update_velocity,
)

LADDER = ComponentLadder()
LO, HI = LADDER.gain_bounds()


def reference_fitness(kp, ki, kd, window=5.0, dt=1e-3, n_filter=10.0):
    """Straight-line scalar loop for the motor channel, written without the package."""
    K, tau, r = 600.0, 0.5, 2.5
    a = math.exp(-dt / tau)
    rpm = 0.0
    integ = prev_e = dfilt = 0.0
    tf = kd / (n_filter * kp)
    ys = []
    for k in range(int(round(window / dt)) + 1):
        v = min(max(rpm * 5.0 / 3000.0, 0.0), 5.0)
        ys.append(v)
        if k == int(round(window / dt)):
            break
        e = r - v
        dfilt = (tf * dfilt + (e - prev_e)) / (tf + dt)
        i_new = integ + 0.5 * (e + prev_e) * dt
        u = kp * e + ki * i_new + kd * dfilt
        if (u > 5 and e > 0) or (u < 0 and e < 0):
            i_new = integ
            u = kp * e + ki * i_new + kd * dfilt
        u = min(max(u, 0.0), 5.0)
        integ, prev_e = i_new, e
        rpm = a * rpm + K * (1 - a) * u
    errs = [abs(r - v) for v in ys]
    iae = dt * (sum(errs) - 0.5 * (errs[0] + errs[-1]))
    over = max(0.0, max(ys) - r) / 2.5
    return iae + over


class _Exploding:
    """Unstable discrete stub: y <- 1.5 y + u."""

    def __init__(self, y=0.0):
        self.y = y

    @property
    def output(self):
        return self.y

    def replica(self, batch=None):
        return _Exploding(np.zeros(batch) if batch else 0.0)

    def step(self, u, dt):
        self.y = 1.5 * self.y + 100.0 * u
        return self.y


class TestFitness:
    def test_matches_scalar_reference_loop(self, motor_channel):
        got = evaluate_fitness(np.array([1.0, 1.0, 0.01]), motor_channel, FitnessWeights())
        assert got == pytest.approx(reference_fitness(1.0, 1.0, 0.01), rel=1e-9)

    def test_second_reference_point(self, motor_channel):
        g = np.array([4.0, 0.5, 0.002])
        got = evaluate_fitness(g, motor_channel, FitnessWeights())
        assert got == pytest.approx(reference_fitness(*g), rel=1e-9)

    def test_output_already_at_reference(self, gyro_channel):
        gyro_channel.reference_v = 2.5  # zero rate sits at mid-swing
        f = evaluate_fitness(np.array([[1.0, 1.0, 0.01], [10.0, 20.0, 0.5]]), gyro_channel, FitnessWeights())
        np.testing.assert_array_equal(f, [0.0, 0.0])

    def test_constant_one_volt_error(self):
        ch = TuningChannel(motor_plant(), tachometer_map(), 1.0, PidConfig(dt=1e-3), window=2.0)
        f = evaluate_fitness(np.zeros(3), ch, FitnessWeights(alpha=0.0, beta=1.0))
        assert f == pytest.approx(2.0, abs=1e-12)

    def test_weights_scale_terms(self, motor_channel):
        g = np.array([1.0, 1.0, 0.01])
        iae, peak, _ = motor_channel.simulate(g)
        over = step_overshoot(peak[0], 2.5, 2.5)
        f = evaluate_fitness(g, motor_channel, FitnessWeights(alpha=3.0, beta=0.5))
        assert f == pytest.approx(0.5 * iae[0] + 3.0 * over, rel=1e-12)

    def test_divergence_scores_penalty(self):
        ch = TuningChannel(_Exploding(), tachometer_map(), 2.5, PidConfig(dt=1e-3), window=0.5)
        assert evaluate_fitness(np.array([1.0, 1.0, 0.0]), ch, FitnessWeights()) == DIVERGED_FITNESS

    def test_batch_rows_match_single_calls(self, short_motor_channel):
        rng = np.random.default_rng(1)
        x = LO + (HI - LO) * rng.random((6, 3))
        batch = evaluate_fitness(x, short_motor_channel, FitnessWeights())
        singles = [evaluate_fitness(row, short_motor_channel, FitnessWeights()) for row in x]
        np.testing.assert_allclose(batch, singles, rtol=1e-13)

    def test_overshoot_normalization(self):
        assert step_overshoot(0.5, 2.5, 2.5) == pytest.approx(0.2)
        assert step_overshoot(-1.0, 2.5, 2.5) == 0.0
        assert step_overshoot(0.5, 0.0, 2.0) == 0.25
        assert step_overshoot(0.5, 0.0, 0.0) == 0.5

    @pytest.mark.parametrize("kw", [dict(alpha=-1.0), dict(alpha=0.0, beta=0.0)])
    def test_invalid_weights(self, kw):
        with pytest.raises(ValueError):
            FitnessWeights(**kw)


class TestSwarmUpdates:
    def test_init_within_bounds(self):
        cfg = PsoConfig(n_particles=200)
        s = init_swarm(cfg, np.random.default_rng(0), sphere([1, 1, 0.1]))
        assert len(s) == 200
        assert np.all((s.x >= LO) & (s.x <= HI))
        assert np.all(np.abs(s.v) <= cfg.v_max)
        assert s.f_global_best == s.f_local_best.min()
        p = s.particle(3)
        np.testing.assert_array_equal(p.x, p.x_local_best)

    def test_velocity_example(self):
        cfg = PsoConfig(w=0.5, c1=1.0, c2=1.0, v_max=[100.0] * 3)
        v = update_velocity(np.zeros(3), np.ones(3), np.full(3, 2.0), np.full(3, 4.0), cfg, 0.5, 0.5)
        np.testing.assert_allclose(v, [3.5, 3.5, 3.5])

    def test_velocity_clipped(self):
        cfg = PsoConfig(w=1.0, v_max=[1.0, 1.0, 1.0])
        v = update_velocity(np.zeros(3), np.array([5.0, -5.0, 0.2]), np.zeros(3), np.zeros(3), cfg, 0.0, 0.0)
        np.testing.assert_array_equal(v, [1.0, -1.0, 0.2])

    def test_position_clamped_and_velocity_zeroed(self):
        cfg = PsoConfig(bounds_lo=[0, 0, 0], bounds_hi=[1, 1, 1])
        x, v = update_position(np.array([0.9, 0.5, 0.1]), np.array([0.3, 0.1, -0.3]), cfg)
        np.testing.assert_allclose(x, [1.0, 0.6, 0.0])
        np.testing.assert_allclose(v, [0.0, 0.1, 0.0])

    @pytest.mark.parametrize(
        "kw",
        [dict(n_particles=0), dict(n_iterations=0), dict(bounds_lo=[1, 1, 1], bounds_hi=[0, 2, 2]),
         dict(w=-0.1), dict(bounds_lo=[0, 0])],
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            PsoConfig(**kw)


class TestRunPso:
    def test_sphere_recovery(self):
        center = np.array([3.0, 7.0, 0.2])
        f = sphere(center, scale=HI - LO)
        hits = 0
        for seed in range(20):
            _, trace = run_pso(f, PsoConfig(seed=seed))
            hits += bool(np.all(np.abs(trace.best_continuous - center) <= 0.01 * np.abs(center)))
        assert hits >= 18

    def test_single_particle_single_iteration(self):
        _, trace = run_pso(sphere([1, 1, 0.1]), PsoConfig(n_particles=1, n_iterations=1))
        assert len(trace.iterations) == 1
        assert trace.iterations[0][0] == 1

    def test_trace_is_monotone_and_in_bounds(self):
        _, trace = run_pso(sphere([3, 7, 0.2], HI - LO), PsoConfig(n_particles=10, n_iterations=40, seed=5))
        assert [it for it, _, _ in trace.iterations] == list(range(1, 41))
        assert np.all(np.diff(trace.fitness) <= 0)
        for _, xb, _ in trace.iterations:
            assert np.all((xb >= LO) & (xb <= HI))

    def test_global_best_is_minimum_of_all_evaluations(self):
        seen = []
        base = sphere([2, 12, 0.3], HI - LO)

        def logged(x):
            f = base(x)
            seen.extend(f.tolist())
            return f

        _, trace = run_pso(logged, PsoConfig(n_particles=7, n_iterations=15, seed=2))
        assert len(seen) == 7 * 15
        assert trace.fitness[-1] == min(seen)
        # running minimum over whole iterations
        per_it = np.minimum.accumulate(np.array(seen).reshape(15, 7).min(axis=1))
        np.testing.assert_array_equal(trace.fitness, per_it)

    def test_deterministic_per_seed(self, short_motor_channel):
        cfg = PsoConfig(n_particles=8, n_iterations=6, seed=11)
        a = run_pso(short_motor_channel, cfg, ladder=LADDER)
        b = run_pso(short_motor_channel, cfg, ladder=LADDER)
        assert a[0] == b[0]
        assert a[1].to_csv() == b[1].to_csv()

    def test_zero_coefficients_freeze_swarm(self):
        cfg = PsoConfig(n_particles=5, n_iterations=10, w=0.0, c1=0.0, c2=0.0)
        _, trace = run_pso(sphere([1, 1, 0.1]), cfg)
        first = trace.iterations[0]
        for _, xb, f in trace.iterations:
            np.testing.assert_array_equal(xb, first[1])
            assert f == first[2]

    def test_quantized_result_is_rescored(self, short_motor_channel):
        code, trace = run_pso(short_motor_channel, PsoConfig(n_particles=6, n_iterations=4), ladder=LADDER)
        assert isinstance(code, GainCode)
        g = decode_gains(code, LADDER).as_array()
        np.testing.assert_array_equal(trace.quantized_gains, g)
        assert trace.quantized_fitness == evaluate_fitness(g, short_motor_channel, FitnessWeights())

    def test_no_ladder_returns_no_code(self):
        code, trace = run_pso(sphere([1, 1, 0.1]), PsoConfig(n_particles=3, n_iterations=2))
        assert code is None and trace.code is None

    def test_trace_csv(self):
        _, trace = run_pso(sphere([1, 1, 0.1]), PsoConfig(n_particles=3, n_iterations=4))
        rows = list(csv.reader(io.StringIO(trace.to_csv())))
        assert rows[0] == ["iteration", "kp", "ki", "kd", "fitness"]
        assert len(rows) == 5
        assert float(rows[-1][4]) == trace.fitness[-1]


class TestExhaustive:
    def test_finds_planted_optimum(self):
        target = decode_gains(GainCode(5, 9, 2), LADDER).as_array()
        code, f, all_f = exhaustive_search(sphere(target, HI - LO), LADDER)
        assert code == GainCode(5, 9, 2)
        assert f == 0.0 and all_f.shape == (4096,)
        assert all_f[code.register] == 0.0


class TestConvergenceStudy:
    def test_threshold_examples(self):
        assert iterations_to_threshold(np.array([10.0, 5.0, 1.04, 1.0])) == 3
        assert iterations_to_threshold(np.array([1.0, 1.0])) == 1
        assert iterations_to_threshold(np.array([4.0, 2.0, 1.0]), rel=0.0) == 3

    def test_rows_and_csv(self):
        rows = convergence_study([4, 9], PsoConfig(n_iterations=12), sphere([3, 7, 0.2], HI - LO, 0.01))
        assert [r.particles for r in rows] == [4, 9]
        assert all(1 <= r.iterations_to_threshold <= 12 and r.seconds > 0 for r in rows)
        parsed = list(csv.reader(io.StringIO(study_to_csv(rows))))
        assert parsed[0] == ["particles", "iterations_to_threshold", "seconds"]
        assert [int(p[0]) for p in parsed[1:]] == [4, 9]

    def test_empty_counts_rejected(self):
        with pytest.raises(ValueError):
            convergence_study([], PsoConfig(), sphere([1, 1, 1]))


def test_gyro_replica_quiescent_voltage():
    ch = TuningChannel(gyroscope_plant(), gyroscope_map(), 3.5, PidConfig(1e-3, -2.5, 2.5))
    assert ch.quiescent_voltage() == 2.5
