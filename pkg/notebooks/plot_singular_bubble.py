"""
A log-singular bubble
=====================

A radial factor that blows up like 1/(r(1 - ln r)) near a point keeps its
L^p norms bounded while the distance from the center to the unit circle
stays above 1 + ln(eta). The 1D quadrature of the profile is the oracle.
"""

import math

import matplotlib.pyplot as plt
import numpy as np

from metriclab import SolverConfig, build_grid, pair_distance, sample_factor, singular_set_31

fam = singular_set_31(eta=2.0)
grid = build_grid(fam.manifold, 256)
c = fam.center
y = c + np.array([1.0, 0.0])

js = [10, 100, 1000, 10000]
oracle = [fam.radial_oracle(j) for j in js]
graph = [pair_distance(sample_factor(fam.factor_spec(j), grid), c, y, SolverConfig(3)).distance for j in js]
for j, o, g in zip(js, oracle, graph):
    print(f"j={j:>6}: oracle {o:.5f}  graph {g:.5f}")

r = np.geomspace(1e-9, 1, 400)
for j in (10, 1000):
    plt.loglog(r, fam.factor_spec(j).radial(r), label=f"j={j}")
plt.xlabel("r")
plt.ylabel("f_j(r)")
plt.legend()
plt.figure()
plt.semilogx(js, oracle, "o-", label="radial quadrature")
plt.semilogx(js, graph, "s--", label="graph solver")
plt.axhline(1 + math.log(2), color="k", lw=0.8, label="1 + ln 2")
plt.legend()
plt.show()
