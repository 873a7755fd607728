"""
Uniform convergence of a shrinking spike
========================================

A spike of height j^alpha on a ball of radius 1/j costs almost nothing in
length once its radius is below the grid's resolution of interest. The
maximum relative error against the flat distance shrinks with j.
"""

import matplotlib.pyplot as plt

from metriclab import spike_34
from metriclab.experiments import run_convergence

fam = spike_34(alpha=0.5, j_list=(8, 16, 32, 64))
rep = run_convergence(fam, n_pairs=100, n=128)
rows = [r for r in rep.rows if r["kind"] == "uniform"]
for r in rows:
    print(f"j={r['j']:>3}: max relative error {r['max_rel_error']:.3%}")
print(rep.verdicts)

plt.loglog([r["j"] for r in rows], [r["max_rel_error"] for r in rows], "o-")
plt.xlabel("j")
plt.ylabel("max relative error")
plt.show()
