"""Solve du = u'' + sin(u) + noise with each driver and print a few slices.

Run: python3 demos/quasilinear_paths.py
"""
import numpy as np

from heatlab import DriftSpec, GridSpec, InitialData, NoiseSpec, SeedPolicy, solve_quasilinear

grid = GridSpec(0.25, 64, 32)
drift = DriftSpec(np.sin, 1.0, "sin")
u0 = InitialData.sine()
for spec in (NoiseSpec.white(), NoiseSpec.kac_stroock(64), NoiseSpec.donsker(8)):
    U = solve_quasilinear(spec, u0, drift, grid, SeedPolicy(5).stream(0, 3))
    mid = U.values[:, grid.nx // 2]
    print(f"{spec.model:12s} u(t, 0.5) at t=0, T/2, T: {mid[0]:.3f} {mid[grid.nt // 2]:+.3f} {mid[-1]:+.3f}")
