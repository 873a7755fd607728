"""
A shortcut along a cinched equator
==================================

Shrinking the metric to h0 times the round one in a thin band around the
equator makes the equator a highway. Two equator points a quarter turn
apart get distance h0 * pi/2 in the limit, while the poles stay pi apart.
"""

import math

from metriclab import SolverConfig, build_grid, cinched_sphere_33, pair_distance, sample_factor

fam = cinched_sphere_33(h0=0.5)
grid = build_grid(fam.manifold, 128)
cfg = SolverConfig(stencil_radius=5)
pairs = {"equator": ((math.pi / 2, 0.0), (math.pi / 2, math.pi / 2)), "poles": ((0.0, 0.0), (math.pi, 0.0))}
for j in (16, 32, 64):
    f = sample_factor(fam.factor_spec(j), grid)
    for name, (x, y) in pairs.items():
        d = pair_distance(f, x, y, cfg).distance
        print(f"j={j:>2} {name:8s} graph {d:.4f}  limit {fam.limit_distance(x, y):.4f}")
