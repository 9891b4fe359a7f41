"""Optimize one channel draw with every method and print how the sum EE evolves.

Run: python3 demos/01_single_run.py [seed]
"""

import sys

import numpy as np

from starris_ee import AOConfig, Dimensions, Method, RunParams, default_scenario, optimize, sample_links

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

# 2 users in front of the surface, 2 behind it, 16 elements, 2x2 antennas
scenario = default_scenario(Dimensions(n_bs=2, n_u=2, n_users=4, n_ris=16))
links = sample_links(scenario, seed)
params = RunParams()

for method in Method:
    inst = params.instance(links, scenario.noise_power, method)
    trace = optimize(inst, AOConfig(seed=seed))
    ee = trace.sum_ee
    print(f"{method.value:9s} status={trace.status:10s} iterations={len(ee) - 1:3d} "
          f"sum EE {ee[0]:8.1f} -> {ee[-1]:8.1f} nats/J")
    print(f"          per-user rates (nats/use): {np.round(trace.final.rates, 3)}")

# the surface coefficients of the last (no-RIS) run are all zero; show the ES ones instead
inst = params.instance(links, scenario.noise_power, Method.STAR_ES)
trace = optimize(inst, AOConfig(seed=seed))
split = np.abs(trace.ris.theta_r) ** 2
print("\nSTAR-ES share of energy reflected per element:")
print(np.round(split, 2))
