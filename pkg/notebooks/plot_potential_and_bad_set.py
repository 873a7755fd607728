"""
Potentials and the bad set
==========================

The potential V f(x) = integral of f(z) d(x, z)^(1-m) dz is computed by FFT
on the torus grid. Tail maxima of the potentials of |f_j^2 - 1|^(1/2) pick
out where a degenerating family fails to converge; for a single bubble
this set collapses onto the center.
"""

import matplotlib.pyplot as plt

from metriclab import FlatTorus, build_grid, potential_field, singular_set_31
from metriclab.experiments import run_badset
from metriclab.fields import Constant, sample_factor

T = FlatTorus(2, 1.0)
for n in (64, 128, 256):
    v = potential_field(sample_factor(Constant(T), build_grid(T, n))).values
    print(f"n={n}: V(1) = {v.mean():.5f}")

fam = singular_set_31(j_list=(10, 100, 1000, 10000))
rep = run_badset(fam, n=128)
for r in rep.rows:
    if r["kind"] == "estimate" and r["delta_factor"] == 4.0:
        print(f"j0={r['j0']:>5}: area {r['area']:.5f}, farthest point {r['max_center_distance']:.3f}")

plt.plot([r["j"] for r in rep.rows if r["kind"] == "tail"],
         [r["norm_p"] for r in rep.rows if r["kind"] == "tail"], "o-")
plt.xscale("log")
plt.xlabel("j")
plt.ylabel("||f_j' ||_1")
plt.show()
