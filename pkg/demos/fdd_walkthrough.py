"""Watch X_n(t, x) approach the Gaussian law of the white-noise solution.

Donsker noise gets there quickly.  Kac-Stroock noise is slower because its
temporal correlation length 1/(2 n x) damps the high modes; at moderate n the
variance is visibly short of x(1-x)/2 - transient.

Run: python3 demos/fdd_walkthrough.py   (about a minute with 8 threads; KS itself fluctuates by ~0.006 at M=2000)
"""
import os

from heatlab import NoiseSpec, fdd_convergence

threads = os.cpu_count() or 1
points = [(0.5, 0.5), (0.5, 0.25)]
for family in ([NoiseSpec.donsker(n) for n in (4, 16, 64, 256)],
               [NoiseSpec.kac_stroock(n) for n in (4, 16, 64, 256)]):
    rep = fdd_convergence(family, points, M=2000, seed=0, threads=threads)
    print(family[0].model, rep.status)
    for row in rep.select("ks_marginal(0.5,0.5)"):
        print(f"  n={row.n:4d}  KS {row.value:.4f} +- {row.stderr:.4f}")
