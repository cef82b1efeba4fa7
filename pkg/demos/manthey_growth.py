"""The integral I(n, 1, 1/n) keeps growing, but only like log n.

Run: python3 demos/manthey_growth.py
"""
import math

from heatlab import manthey_integral

base = manthey_integral(8)
for n in (8, 32, 128, 512, 2048, 8192):
    v = manthey_integral(n)
    print(f"n={n:5d}  I={v:.6f}  I/I(8)={v / base:.3f}  log2 n={math.log2(n):.0f}")
