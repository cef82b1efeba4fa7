"""Two series for the Dirichlet heat kernel, and the singular integrals built on it.

Run: python3 demos/kernel_tour.py
"""
import numpy as np

from heatlab import gaussian_bound_margin, green_image, green_spectral, lemma_b1_fits

# the sine series converges fast for large t, the image series for small t;
# both should agree wherever either is cheap enough to evaluate
xs = np.linspace(0.0, 1.0, 41)
X, Y = np.meshgrid(xs, xs, indexing="ij")
for t in (1e-3, 1 / np.pi ** 2, 0.1, 1.0):
    gap = np.max(np.abs(green_spectral(t, X, Y) - green_image(t, X, Y)))
    print(f"t={t:8.5f}  max |sine - image| = {gap:.2e}")

# the Gaussian envelope should dominate everywhere (margin >= 0)
print("min envelope margin:", float(np.min(gaussian_bound_margin(0.05, X, Y))))

# increments of the kernel integrals scale like h^(3-alpha) and h^((3-alpha)/2)
for kind, fit in lemma_b1_fits(alpha=2.0).items():
    print(f"{kind:11s} slope {fit.slope:.3f}  (r^2 {fit.r_squared:.4f})")
