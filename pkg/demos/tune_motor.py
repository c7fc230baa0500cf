"""
Tuning the motor loop with a particle swarm
===========================================

The controller gains are set by 4-bit component codes, so only 4096 gain
triples exist.  That makes the swarm easy to check: score every code, then
see how close a 50 x 50 swarm search lands after rounding to the nearest
code.  Takes about 15 seconds.
"""
# %%
import time

from swarmpid import ComponentLadder, FitnessWeights, PidConfig, PsoConfig, TuningChannel
from swarmpid import decode_gains, exhaustive_search, run_pso
from swarmpid.plants import motor_plant, tachometer_map

ladder = ComponentLadder()
motor = TuningChannel(motor_plant(), tachometer_map(), reference_v=2.5, pid=PidConfig(dt=1e-3))
weights = FitnessWeights(alpha=1.0, beta=1.0)

# %%
# Brute force over the whole lattice (vectorized, about half a second).
t0 = time.perf_counter()
best_code, best_f, all_f = exhaustive_search(motor, ladder, weights)
print(f"exhaustive: {best_code.as_tuple()} F={best_f:.5f} ({time.perf_counter() - t0:.1f} s)")
print("gains:", decode_gains(best_code, ladder))

# %%
# The swarm searches the continuous box spanned by the ladders.
t0 = time.perf_counter()
code, trace = run_pso(motor, PsoConfig(seed=0), weights, ladder)
print(f"swarm:      {code.as_tuple()} F={trace.quantized_fitness:.5f} ({time.perf_counter() - t0:.1f} s)")
print(f"ratio to the lattice optimum: {trace.quantized_fitness / best_f:.4f}")

# %%
# Best fitness per iteration never increases.
for it, x, f in trace.iterations[::7]:
    print(f"iteration {it:2d}: kp={x[0]:.3f} ki={x[1]:.3f} kd={x[2]:.4f} F={f:.5f}")

# %%
# Where does the chosen code rank among all 4096?
rank = int((all_f < trace.quantized_fitness).sum()) + 1
print(f"rank {rank} of {all_f.size}")
