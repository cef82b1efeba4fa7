"""Dirichlet heat kernel on [0, 1] and quadrature of its integral estimates.

The kernel G_t(x, y) of d/dt - d^2/dx^2 with zero boundary values has two
classical expansions: a sine series that converges fast for large t and a
sum over reflected Gaussians that converges fast for small t.  ``green``
switches between them at t = 1/pi^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

PI2 = math.pi ** 2
T_SWITCH = 1.0 / PI2
KERNEL_TOL = 1e-12
INTEGRAL_RTOL = 1e-4


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("the heat kernel is only defined for elapsed time t > 0")
    return t


def _check_tol(tol):
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol}")


def spectral_modes(t: float, tol: float = KERNEL_TOL) -> int:
    """Smallest K with 2 * sum_{k>K} exp(-k^2 pi^2 t) < tol.

    Uses k^2 >= (K+1)^2 + (k-K-1)(2K+2) to bound the tail by a geometric series.
    """
    a = PI2 * t
    K = 0
    while True:
        q = math.exp(-(2 * K + 2) * a)
        tail = 2.0 * math.exp(-((K + 1) ** 2) * a) / (1.0 - q) if q < 1 else math.inf
        if tail < tol:
            return max(K, 1)
        K += 1


def image_pairs(t: float, tol: float = KERNEL_TOL) -> int:
    """Smallest N such that the images |n| > N contribute less than tol.

    For x, y in [0, 1] every omitted Gaussian has |x -+ y - 2n| >= 2|n| - 2.
    """
    pref = 1.0 / math.sqrt(4 * math.pi * t)
    N = 1
    while True:
        tail = 0.0
        for m in range(N + 1, N + 60):
            term = 4.0 * pref * math.exp(-((2 * m - 2) ** 2) / (4 * t))
            tail += term
            if term < 1e-300:
                break
        if tail < tol:
            return N
        N += 1


def green_spectral(t, x, y, tol: float = KERNEL_TOL):
    """Sine-series evaluation 2 sum_k sin(k pi x) sin(k pi y) exp(-k^2 pi^2 t)."""
    _check_tol(tol)
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    K = spectral_modes(float(np.min(t)), tol)
    out = np.zeros(np.broadcast(t, x, y).shape)
    for k in range(1, K + 1):
        kp = k * math.pi
        out += np.sin(kp * x) * np.sin(kp * y) * np.exp(-(kp * kp) * t)
    out *= 2.0
    return out[()] if out.ndim == 0 else out


def green_image(t, x, y, tol: float = KERNEL_TOL):
    """Reflection series (4 pi t)^{-1/2} sum_n [e^{-(x-y-2n)^2/4t} - e^{-(x+y-2n)^2/4t}]."""
    _check_tol(tol)
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    N = image_pairs(float(np.max(t)), tol)
    out = np.zeros(np.broadcast(t, x, y).shape)
    four_t = 4.0 * t
    for n in range(-N, N + 1):
        out += np.exp(-((x - y - 2 * n) ** 2) / four_t) - np.exp(-((x + y - 2 * n) ** 2) / four_t)
    out /= np.sqrt(math.pi * four_t)
    return out[()] if out.ndim == 0 else out


def green(t, x, y, tol: float = KERNEL_TOL):
    """G_t(x, y): reflection series below ``T_SWITCH``, sine series above."""
    t = _check_time(t)
    if t.ndim == 0:
        fn = green_image if t < T_SWITCH else green_spectral
        return fn(t, x, y, tol)
    t, x, y = np.broadcast_arrays(t, np.asarray(x, float), np.asarray(y, float))
    out = np.empty(t.shape)
    small = t < T_SWITCH
    if small.any():
        out[small] = green_image(t[small], x[small], y[small], tol)
    if (~small).any():
        out[~small] = green_spectral(t[~small], x[~small], y[~small], tol)
    return out


def gaussian_envelope(t, x, y):
    t = _check_time(t)
    return np.exp(-((np.asarray(x) - np.asarray(y)) ** 2) / (4 * t)) / np.sqrt(2 * math.pi * t)


def gaussian_bound_margin(t, x, y):
    """Envelope (2 pi t)^{-1/2} e^{-(x-y)^2/4t} minus G_t(x, y); nonnegative up to roundoff."""
    return gaussian_envelope(t, x, y) - green(t, x, y)


# --------------------------------------------------------------------------
# Composite quadrature
# --------------------------------------------------------------------------

def graded_time_cells(tau_max: float, tau_min: float, levels: int | None = None,
                      nodes_per_level: int = 6, ratio: float = 2.0, singular_exponent: float = 0.0):
    """Nodes and weights on (0, tau_max] graded geometrically toward 0.

    Level l covers [tau_max / ratio^(l+1), tau_max / ratio^l] and carries a
    Gauss-Legendre rule.  The remaining sliver (0, eps] gets one node at
    eps/2 whose weight integrates c * tau^(-singular_exponent) exactly, so an
    integrable power-law singularity at 0 is captured to leading order.
    ``levels`` defaults to enough levels to reach ``tau_min``, never fewer than 12.
    """
    if tau_max <= 0:
        return np.empty(0), np.empty(0)
    if not 0 <= singular_exponent < 1:
        raise ValueError("singular_exponent must lie in [0, 1)")
    if levels is None:
        levels = 12
        if tau_min > 0:
            levels = max(levels, int(math.ceil(math.log(tau_max / tau_min, ratio))))
    gx, gw = np.polynomial.legendre.leggauss(nodes_per_level)
    nodes, weights = [], []
    hi = tau_max
    for _ in range(levels):
        lo = hi / ratio
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (gx + 1.0))
        weights.append(half * gw)
        hi = lo
    b = singular_exponent
    nodes.append(np.array([hi / 2]))
    weights.append(np.array([0.5 ** b * hi / (1.0 - b)]))
    return np.concatenate(nodes), np.concatenate(weights)


def space_cells(centres, tau: float, width: float | None = None, per_sigma: int = 10,
                min_cells: int = 256, max_cells: int = 20000):
    """Midpoint nodes/weights on [0, 1] concentrated where G_tau(c, .) lives.

    Each centre gets a window of half-width 12 sqrt(2 width) (``width`` is the
    widest kernel time involved, default ``tau``); overlapping windows merge.
    Cell size is sqrt(2 tau) / per_sigma.
    """
    width = tau if width is None else width
    sigma = math.sqrt(2.0 * tau)
    half = 12.0 * math.sqrt(2.0 * width)
    spans = sorted((max(0.0, c - half), min(1.0, c + half)) for c in centres)
    merged = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    nodes, weights = [], []
    for lo, hi in merged:
        if hi <= lo:
            continue
        n = int(math.ceil((hi - lo) * per_sigma / sigma))
        n = min(max(n, int(min_cells * (hi - lo)) + 1), max_cells)
        h = (hi - lo) / n
        nodes.append(lo + (np.arange(n) + 0.5) * h)
        weights.append(np.full(n, h))
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def kernel_composition(s: float, t: float, x: float, y: float) -> float:
    """int_0^1 G_s(x, z) G_t(z, y) dz by the composite midpoint rule (Chapman-Kolmogorov check)."""
    tau = min(s, t)
    z, w = space_cells([x, y], tau, width=max(s, t), per_sigma=40, min_cells=2048)
    return float(np.sum(green(s, x, z) * green(t, z, y) * w))


# --------------------------------------------------------------------------
# Integral estimates for |G|^alpha
# --------------------------------------------------------------------------

_ALPHA_RANGES = {
    "space_incr": (1.5, 3.0),
    "time_incr": (1.0, 3.0),
    "tail": (1.0, 3.0),
}


def lemma_b1_integral(kind: str, alpha: float, *, t: float, x: float, y: float | None = None,
                      s: float | None = None, nodes_per_level: int = 6) -> float:
    """Quadrature of the three |G|^alpha integrals that control the kernel's regularity.

    ``space_incr``  int_0^t int_0^1 |G_{t-r}(x,z) - G_{t-r}(y,z)|^alpha dz dr   (alpha in (3/2, 3))
    ``time_incr``   int_0^s int_0^1 |G_{t-r}(x,z) - G_{s-r}(x,z)|^alpha dz dr   (alpha in (1, 3), s <= t)
    ``tail``        int_s^t int_0^1 |G_{t-r}(x,z)|^alpha dz dr                   (alpha in (1, 3), s <= t)

    The elapsed kernel time is integrated on a rule graded geometrically
    toward the singular end (|G|^alpha ~ tau^{-(alpha-1)/2}), reaching four
    decades below the relevant scale (|x-y|^2 or t-s); space uses the
    composite midpoint rule of ``space_cells``.
    """
    if kind not in _ALPHA_RANGES:
        raise ValueError(f"kind must be one of {sorted(_ALPHA_RANGES)}, got {kind!r}")
    lo, hi = _ALPHA_RANGES[kind]
    if not lo < alpha < hi:
        raise ValueError(f"alpha={alpha} outside the admissible range ({lo}, {hi}) for {kind}")

    beta = (alpha - 1.0) / 2.0
    grade = dict(nodes_per_level=nodes_per_level, singular_exponent=beta)
    if kind == "space_incr":
        if y is None:
            raise ValueError("space_incr needs both x and y")
        d = abs(x - y)
        if d == 0 or t <= 0:
            return 0.0
        taus, dtaus = graded_time_cells(t, 1e-4 * min(d * d, t), **grade)

        def slab(tau):
            z, w = space_cells([x, y], tau)
            return np.sum(np.abs(green(tau, x, z) - green(tau, y, z)) ** alpha * w)

    elif kind == "time_incr":
        if s is None or s > t:
            raise ValueError("time_incr needs s <= t")
        h = t - s
        if h == 0 or s <= 0:
            return 0.0
        # tau = s - r runs over (0, s]; the kernels are G_{tau + h} and G_tau.
        taus, dtaus = graded_time_cells(s, 1e-4 * min(h, s), **grade)

        def slab(tau):
            z, w = space_cells([x], tau, width=tau + h)
            return np.sum(np.abs(green(tau + h, x, z) - green(tau, x, z)) ** alpha * w)

    else:
        if s is None or s > t:
            raise ValueError("tail needs s <= t")
        h = t - s
        if h == 0:
            return 0.0
        taus, dtaus = graded_time_cells(h, 1e-4 * h, **grade)

        def slab(tau):
            z, w = space_cells([x], tau)
            return np.sum(np.abs(green(tau, x, z)) ** alpha * w)

    return float(sum(slab(tau) * dtau for tau, dtau in zip(taus, dtaus)))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float

    @property
    def constant(self) -> float:
        """Prefactor C in value ~ C h^slope."""
        return math.exp(self.intercept)


def fit_exponent(pairs) -> ExponentFit:
    """Least-squares line through (log h, log value)."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 4:
        raise ValueError("need at least 4 (h, value) pairs")
    h, v = arr[:, 0], arr[:, 1]
    if np.any(~(h > 0)) or np.any(~(v > 0)):
        raise ValueError("scales and values must be strictly positive")
    lx, ly = np.log(h), np.log(v)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return ExponentFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0))


LEMMA_B1_TARGETS = {"space_incr": 1.0, "time_incr": 0.5, "tail": 0.5}


def lemma_b1_fits(alpha: float = 2.0, t: float = 0.5, x: float = 0.5,
                  scales=None, nodes_per_level: int = 6) -> dict:
    """Log-log slopes of the three integrals against their scale h.

    h is |x - y| for ``space_incr`` (y = x + h) and t - s for the other two.
    For alpha = 2 the slopes approach 3 - alpha and (3 - alpha) / 2.
    """
    hs = np.logspace(-4, -1, 7) if scales is None else np.asarray(scales, dtype=float)
    fits = {}
    for kind in LEMMA_B1_TARGETS:
        vals = []
        for h in hs:
            if kind == "space_incr":
                vals.append(lemma_b1_integral(kind, alpha, t=t, x=x, y=x + h, nodes_per_level=nodes_per_level))
            else:
                vals.append(lemma_b1_integral(kind, alpha, t=t, x=x, s=t - h, nodes_per_level=nodes_per_level))
        fits[kind] = fit_exponent(zip(hs, vals))
    return fits
