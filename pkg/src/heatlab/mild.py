"""Mild solutions of the linear and quasi-linear heat equations.

Convolutions against a cell-constant input are computed mode by mode: with
lambda_k = (k pi)^2 the integral of G_{t-s}(x, y) over a grid cell factors
into a sine integral in y and an exponential integral in s, both in closed
form, so the kernel singularity at s = t needs no special quadrature.  Only
the number of sine modes K is a discretisation parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import ConvergenceError
from .green import green
from .grid import GridSpec, ScalarField
from .noise import NoiseSpec, sample_noise

PI = math.pi
DEFAULT_WHITE_MODES = 64
PICARD_TOL = 1e-10
PICARD_MAX_ITER = 200


def default_modes(grid: GridSpec) -> int:
    return max(256, 4 * grid.nx)


def omitted_mode_variance(K: int) -> float:
    """sum_{k>K} 1/(2 k^2 pi^2), the stationary variance left out by K modes."""
    from scipy.special import polygamma
    return float(polygamma(1, K + 1)) / (2 * PI * PI)


def modes_for_budget(budget: float) -> int:
    """Smallest K whose omitted stationary variance is below ``budget``."""
    K = max(1, int(1.0 / (2 * PI * PI * budget)) - 2)
    while omitted_mode_variance(K) >= budget:
        K += 1
    return K


# --------------------------------------------------------------------------
# Inputs
# --------------------------------------------------------------------------

def _vectorised(fn):
    def call(u):
        u = np.asarray(u, dtype=float)
        out = np.asarray(fn(u), dtype=float)
        if out.shape != u.shape:
            out = np.vectorize(lambda v: float(fn(v)))(u)
        return out
    return call


@dataclass
class DriftSpec:
    """Globally Lipschitz drift b with a caller-declared bound L."""

    b: Callable
    lipschitz_bound: float
    name: str = "custom"
    check_range: float = 10.0

    def __post_init__(self):
        if self.lipschitz_bound < 0:
            raise ValueError("lipschitz_bound must be >= 0")
        self.b = _vectorised(self.b)
        rng = np.random.default_rng(20240601)
        u = rng.uniform(-self.check_range, self.check_range, 1000)
        v = rng.uniform(-self.check_range, self.check_range, 1000)
        gap = np.abs(self(u) - self(v)) - self.lipschitz_bound * np.abs(u - v) * (1 + 1e-9)
        if np.any(gap > 1e-12):
            worst = int(np.argmax(gap))
            raise ValueError(
                f"drift {self.name!r} violates the declared Lipschitz bound {self.lipschitz_bound} "
                f"at u={u[worst]:.4g}, v={v[worst]:.4g}"
            )

    def __call__(self, u):
        return self.b(u)

    @classmethod
    def zero(cls) -> "DriftSpec":
        return cls(lambda u: np.zeros_like(u), 0.0, "zero")

    @classmethod
    def linear(cls, c: float) -> "DriftSpec":
        return cls(lambda u: c * u, abs(c), f"linear({c})")

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


@dataclass
class InitialData:
    u0: Callable
    boundary_compatible: bool = False
    name: str = "custom"

    def __post_init__(self):
        self.u0 = _vectorised(self.u0)
        ends = self(np.array([0.0, 1.0]))
        if not np.all(np.isfinite(ends)):
            raise ValueError("u0 must be finite on [0, 1]")
        if self.boundary_compatible and np.any(np.abs(ends) > 1e-12):
            raise ValueError("u0 flagged boundary-compatible but u0(0) or u0(1) is nonzero")

    def __call__(self, y):
        return self.u0(y)

    @classmethod
    def zero(cls) -> "InitialData":
        return cls(lambda y: np.zeros_like(y), True, "zero")

    @classmethod
    def sine(cls, k: int = 1, amplitude: float = 1.0) -> "InitialData":
        return cls(lambda y: amplitude * np.sin(k * PI * y), True, f"sine({k})")

    @classmethod
    def parabola(cls) -> "InitialData":
        return cls(lambda y: y * (1.0 - y), True, "parabola")

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


# --------------------------------------------------------------------------
# Initial term
# --------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _panel_nodes(t: float, max_panels: int = 200_000):
    width = min(math.sqrt(2.0 * t), 1.0 / 16)
    n = min(int(math.ceil(1.0 / width)), max_panels)
    edges = np.linspace(0.0, 1.0, n + 1)
    half = 0.5 * np.diff(edges)
    y = (edges[:-1, None] + half[:, None] * (_GL_X[None, :] + 1.0)).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return y, w


def initial_term(u0: InitialData, t: float, x):
    """int_0^1 G_t(x, y) u0(y) dy; equals u0(x) at t = 0."""
    if t < 0:
        raise ValueError("initial_term needs t >= 0")
    x = np.asarray(x, dtype=float)
    if t == 0:
        return u0(x)
    if u0.is_zero:
        return np.zeros_like(x)[()]
    scalar = x.ndim == 0
    xs = np.atleast_1d(x)
    if t < 1e-3 and len(xs) <= 8:
        # Per-point windows keep the node count bounded as t -> 0.
        vals = np.empty(len(xs))
        for m, xm in enumerate(xs):
            half = 12.0 * math.sqrt(2.0 * t)
            lo, hi = max(0.0, xm - half), min(1.0, xm + half)
            npan = max(4, int(math.ceil((hi - lo) / math.sqrt(2.0 * t))))
            edges = np.linspace(lo, hi, npan + 1)
            h = 0.5 * np.diff(edges)
            y = (edges[:-1, None] + h[:, None] * (_GL_X[None, :] + 1.0)).ravel()
            w = (h[:, None] * _GL_W[None, :]).ravel()
            vals[m] = np.sum(green(t, xm, y) * u0(y) * w)
    else:
        y, w = _panel_nodes(t)
        uy = u0(y) * w
        vals = green(t, xs[:, None], y[None, :]) @ uy
    vals = np.where((xs == 0) | (xs == 1), 0.0, vals)
    return float(vals[0]) if scalar else vals


def initial_field(u0: InitialData, grid: GridSpec) -> ScalarField:
    """Initial term on every node; row 0 holds u0 itself."""
    vals = np.empty(grid.shape("node"))
    vals[0] = u0(grid.x_nodes)
    if u0.boundary_compatible:
        vals[0, [0, -1]] = 0.0
    for i, t in enumerate(grid.t_nodes[1:], start=1):
        vals[i] = initial_term(u0, float(t), grid.x_nodes)
    return ScalarField(grid, vals, "node", meta={"term": "initial", "u0": u0.name})


# --------------------------------------------------------------------------
# Convolution with a cell-constant input
# --------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _modal_tables(grid: GridSpec, K: int):
    k = np.arange(1, K + 1)
    kp = k * PI
    lam = kp * kp
    xe = grid.x_nodes
    # S[k, j] = int over space cell j of sin(k pi y) dy
    S = (np.cos(np.outer(kp, xe[:-1])) - np.cos(np.outer(kp, xe[1:]))) / kp[:, None]
    decay = np.exp(-lam * grid.dt)
    gain = -np.expm1(-lam * grid.dt) / lam
    phi = 2.0 * np.sin(np.outer(kp, xe))
    phi[:, 0] = 0.0
    phi[:, -1] = 0.0
    return lam, S, decay, gain, phi


def _cell_values(theta: ScalarField, grid: GridSpec | None) -> tuple[np.ndarray, GridSpec]:
    grid = theta.grid if grid is None else grid
    if theta.grid != grid:
        raise ValueError("theta lives on a different grid")
    return theta.to_cells().values, grid


def convolve_full(theta: ScalarField, grid: GridSpec | None = None, modes: int | None = None) -> ScalarField:
    """X(t_i, x_j) = int_0^{t_i} int_0^1 G_{t_i - s}(x_j, y) theta(s, y) dy ds on every node."""
    cells, grid = _cell_values(theta, grid)
    K = default_modes(grid) if modes is None else int(modes)
    lam, S, decay, gain, phi = _modal_tables(grid, K)
    proj = cells @ S.T  # (nt, K)
    Y = np.zeros((grid.nt + 1, K))
    for i in range(grid.nt):
        Y[i + 1] = decay * Y[i] + gain * proj[i]
    return ScalarField(grid, Y @ phi, "node", meta={"term": "convolution", "modes": K})


@lru_cache(maxsize=32)
def mild_weights(grid: GridSpec, i: int, j: int, modes: int | None = None) -> np.ndarray:
    """Cell weights w[a, b] = int_{cell (a, b)} G_{t_i - s}(x_j, y) dy ds, zero for cells after t_i.

    ``(w * theta_cells).sum()`` is the convolution at node (i, j).
    """
    K = default_modes(grid) if modes is None else int(modes)
    lam, S, decay, gain, phi = _modal_tables(grid, K)
    w = np.zeros(grid.shape("cell"))
    if i == 0 or j == 0 or j == grid.nx:
        w.setflags(write=False)
        return w
    lag = grid.dt * np.arange(i - 1, -1, -1)  # t_i - s_{a+1} for a = 0..i-1
    A = np.exp(-np.outer(lag, lam)) * (gain * phi[:, j])[None, :]
    w[:i] = A @ S
    w.setflags(write=False)
    return w


def convolve_mild(theta: ScalarField, grid: GridSpec | None = None, eval_nodes=None,
                  modes: int | None = None) -> ScalarField:
    """Mild convolution of ``theta``; full grid by default.

    With ``eval_nodes`` (an iterable of (t, x) node coordinates) only those
    nodes are computed, each as a weighted sum with ``mild_weights``; the
    remaining entries of the returned field are NaN.
    """
    if eval_nodes is None:
        return convolve_full(theta, grid, modes)
    cells, grid = _cell_values(theta, grid)
    out = np.full(grid.shape("node"), np.nan)
    for t, x in eval_nodes:
        i, j = grid.node_index(t, x)
        out[i, j] = float(np.sum(mild_weights(grid, i, j, modes) * cells))
    return ScalarField(grid, out, "node", meta={"term": "convolution", "sparse": True})


def mild_at(theta: ScalarField, nodes, modes: int | None = None) -> np.ndarray:
    """Convolution values at the given (t, x) nodes as a flat array."""
    cells = theta.to_cells().values
    grid = theta.grid
    idx = [grid.node_index(t, x) for t, x in nodes]
    return np.array([float(np.sum(mild_weights(grid, i, j, modes) * cells)) for i, j in idx])


# --------------------------------------------------------------------------
# Gaussian solution driven by white noise
# --------------------------------------------------------------------------

@dataclass
class SpectralState:
    """Ornstein-Uhlenbeck amplitudes a_k(t) of X(t, x) = sum_k sqrt(2) sin(k pi x) a_k(t)."""

    K: int
    a: np.ndarray = None
    t_current: float = 0.0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.a is None:
            self.a = np.zeros(self.K)
        self.a = np.asarray(self.a, dtype=float)
        if self.a.shape != (self.K,) or not np.all(np.isfinite(self.a)):
            raise ValueError("amplitudes must be K finite numbers")

    @property
    def lam(self) -> np.ndarray:
        return (np.arange(1, self.K + 1) * PI) ** 2

    def step(self, rng: np.random.Generator, dt: float) -> "SpectralState":
        """Exact transition a <- e^{-lam dt} a + N(0, (1 - e^{-2 lam dt}) / (2 lam))."""
        if dt < 0:
            raise ValueError("dt must be >= 0")
        lam = self.lam
        sd = np.sqrt(-np.expm1(-2 * lam * dt) / (2 * lam))
        self.a = np.exp(-lam * dt) * self.a + sd * rng.standard_normal(self.K)
        self.t_current += dt
        return self

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        kp = np.arange(1, self.K + 1) * PI
        vals = math.sqrt(2.0) * np.sin(np.multiply.outer(x, kp)) @ self.a
        return np.where((x == 0) | (x == 1), 0.0, vals)


def sample_white_at(rng: np.random.Generator, times, xs, K: int = DEFAULT_WHITE_MODES) -> np.ndarray:
    """Exact-in-law samples of the K-mode Gaussian solution at times x xs, shape (len(times), len(xs)).

    ``times`` must be nondecreasing and nonnegative; X(0, .) = 0.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    kp = np.arange(1, K + 1) * PI
    lam = kp * kp
    steps = np.diff(np.concatenate([[0.0], times]))
    decay = np.exp(-np.outer(steps, lam))
    sd = np.sqrt(-np.expm1(-2 * np.outer(steps, lam)) / (2 * lam))
    noise = rng.standard_normal((len(times), K)) * sd
    a = np.empty((len(times), K))
    cur = np.zeros(K)
    for i in range(len(times)):
        cur = decay[i] * cur + noise[i]
        a[i] = cur
    xs = np.asarray(xs, dtype=float)
    basis = math.sqrt(2.0) * np.sin(np.outer(kp, xs))
    basis[:, (xs == 0) | (xs == 1)] = 0.0
    return a @ basis


def sample_white_solution(rng: np.random.Generator, grid: GridSpec, K: int = DEFAULT_WHITE_MODES) -> ScalarField:
    """Gaussian mild solution X on every node via K exact OU mode transitions."""
    if K < 1:
        raise ValueError("K must be >= 1")
    vals = sample_white_at(rng, grid.t_nodes, grid.x_nodes, K)
    return ScalarField(grid, vals, "node", dirichlet=True, meta={"noise": "white", "modes": K})


def _transient_modes(t: float, floor: float = 1e-18) -> int:
    # smallest K with exp(-2 lam_K t) / lam_K < floor
    if t <= 0:
        raise ValueError("t must be positive")
    K = 1
    while math.exp(-2 * (K * PI) ** 2 * t) / (K * PI) ** 2 >= floor:
        K *= 2
    return K


def white_solution_variance(t: float, x, K: int | None = None):
    """E X(t, x)^2 = sum_k sin^2(k pi x) (1 - e^{-2 k^2 pi^2 t}) / (k^2 pi^2).

    With ``K`` the series is truncated at K modes.  With ``K=None`` the value
    is exact: the stationary part sums to x(1-x)/2 and only the fast-decaying
    transient is summed numerically.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    x = np.asarray(x, dtype=float)
    if t == 0:
        return np.zeros_like(x)[()]
    if K is not None:
        kp = np.arange(1, K + 1) * PI
        s2 = np.sin(np.multiply.outer(x, kp)) ** 2
        return (s2 * (-np.expm1(-2 * kp * kp * t)) / (kp * kp)).sum(axis=-1)
    Kt = _transient_modes(t)
    kp = np.arange(1, Kt + 1) * PI
    s2 = np.sin(np.multiply.outer(x, kp)) ** 2
    transient = (s2 * np.exp(-2 * kp * kp * t) / (kp * kp)).sum(axis=-1)
    return x * (1 - x) / 2 - transient


def white_solution_covariance(p, q, K: int | None = None) -> float:
    """Cov(X(t, x), X(t', x')) = sum_k sin(k pi x) sin(k pi x') (e^{-lam|t-t'|} - e^{-lam(t+t')}) / lam."""
    (t, x), (s, y) = p, q
    if t < 0 or s < 0:
        raise ValueError("times must be >= 0")
    if t == 0 or s == 0:
        return 0.0
    if K is not None:
        kp = np.arange(1, K + 1) * PI
        lam = kp * kp
        return float(np.sum(np.sin(kp * x) * np.sin(kp * y)
                            * (np.exp(-lam * abs(t - s)) - np.exp(-lam * (t + s))) / lam))
    if t == s:
        Kt = _transient_modes(t)
        kp = np.arange(1, Kt + 1) * PI
        lam = kp * kp
        stationary = min(x, y) * (1 - max(x, y)) / 2
        return float(stationary - np.sum(np.sin(kp * x) * np.sin(kp * y) * np.exp(-2 * lam * t) / lam))
    Kt = _transient_modes(abs(t - s) / 2)
    kp = np.arange(1, Kt + 1) * PI
    lam = kp * kp
    return float(np.sum(np.sin(kp * x) * np.sin(kp * y)
                        * (np.exp(-lam * abs(t - s)) - np.exp(-lam * (t + s))) / lam))


# --------------------------------------------------------------------------
# Quasi-linear equation
# --------------------------------------------------------------------------

@dataclass
class PicardResult:
    field: ScalarField
    iterations: int
    residuals: list = field(default_factory=list)


def psi_functional(eta: ScalarField, u0: InitialData, b: DriftSpec, tol: float = PICARD_TOL,
                   max_iter: int = PICARD_MAX_ITER, modes: int | None = None,
                   initial: ScalarField | None = None, return_history: bool = False):
    """Solve z = int G u0 + int int G b(z) + eta on the nodes of ``eta.grid`` by Picard iteration.

    The drift is made cell-constant by averaging b(z) over the four corners
    of each cell, then convolved exactly.  Raises ``ConvergenceError`` when
    the sup-norm update is still above ``tol`` after ``max_iter`` sweeps.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if eta.layout != "node":
        raise ValueError("eta must be a node field")
    grid = eta.grid
    init = initial if initial is not None else initial_field(u0, grid)
    base = init.values + eta.values
    z = base.copy()
    residuals = []
    if not b.is_zero:
        for it in range(1, max_iter + 1):
            drift = ScalarField(grid, b(z), "node")
            z_new = base + convolve_full(drift, grid, modes).values
            res = float(np.max(np.abs(z_new - z)))
            residuals.append(res)
            z = z_new
            if res < tol:
                break
        else:
            raise ConvergenceError("Picard iteration did not converge", residuals[-1], max_iter)
    out = ScalarField(grid, z, "node", meta={"term": "psi", "iterations": len(residuals)})
    if return_history:
        return PicardResult(out, len(residuals), residuals)
    return out


def solve_quasilinear(noise: NoiseSpec, u0: InitialData, b: DriftSpec, grid: GridSpec,
                      rng: np.random.Generator, modes: int | None = None,
                      white_modes: int = DEFAULT_WHITE_MODES, tol: float = PICARD_TOL,
                      max_iter: int = PICARD_MAX_ITER) -> ScalarField:
    """U_n = psi(X_n) for a noise model, or U = psi(X) for white noise."""
    if noise.model == "white":
        X = sample_white_solution(rng, grid, white_modes)
    else:
        X = convolve_full(sample_noise(noise, rng, grid), grid, modes)
    U = psi_functional(X, u0, b, tol=tol, max_iter=max_iter, modes=modes)
    U.meta.update({"noise": noise.to_dict()})
    return U
