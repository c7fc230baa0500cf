"""
Swarm size against convergence speed
====================================

On a smooth bowl-shaped objective, count the iterations each swarm needs
before its best value is within 5 % of where it finishes.  Bigger swarms
cost more evaluations per iteration but usually need fewer iterations.
"""
# %%
import numpy as np

from swarmpid import ComponentLadder, PsoConfig
from swarmpid.pso import convergence_study, sphere, study_to_csv

lo, hi = ComponentLadder().gain_bounds()
bowl = sphere(center=[3.0, 7.0, 0.2], scale=hi - lo, offset=1e-3)

# %%
# One study per seed; the median smooths out lucky starts.
sizes = [5, 10, 20, 50]
counts = {n: [] for n in sizes}
for seed in range(20):
    for row in convergence_study(sizes, PsoConfig(seed=seed), bowl):
        counts[row.particles].append(row.iterations_to_threshold)
for n in sizes:
    print(f"{n:3d} particles: median {np.median(counts[n]):5.1f} iterations")

# %%
# The same table as the CLI writes it (timings vary run to run).
print(study_to_csv(convergence_study(sizes, PsoConfig(seed=0), bowl)))
