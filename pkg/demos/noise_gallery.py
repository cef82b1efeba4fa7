"""Draw one path of each noise on the same grid and compare their second moments.

Kac-Stroock paths are n sqrt(t x) (-1)^N with parity correlation exp(-2n * area),
Donsker paths are n * Z on 1/n cells, white noise is N(0, 1/|cell|).

Run: python3 demos/noise_gallery.py
"""
import numpy as np

from heatlab import GridSpec, NoiseSpec, SeedPolicy, parity_covariance_exact, sample_noise

grid = GridSpec(0.5, 64, 64)
policy = SeedPolicy(2024)
for spec in (NoiseSpec.white(), NoiseSpec.kac_stroock(64), NoiseSpec.donsker(16)):
    theta = sample_noise(spec, policy.stream(0, 1), grid)
    v = theta.values
    print(f"{spec.model:12s} n={spec.n!s:5s} mean {v.mean():+.3f}  mean square {np.mean(v * v):9.2f}")

# parity correlation decays with the area between the two dominated rectangles
for h in (0.0, 0.01, 0.05, 0.2):
    c = parity_covariance_exact(64, 0.25, 0.5, 0.25, 0.5 + h)
    print(f"h={h:4.2f}  E[parity product] = {float(c):.4f}")
