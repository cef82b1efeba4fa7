"""Monte Carlo and quadrature checks of the convergence results.

Every check returns a ``ConvergenceReport`` whose rows carry a standard
error, and a status (PASS / FAIL / INCONCLUSIVE) decided by an explicit
threshold.  Existential constants are checked as boundedness across n, never
as fixed numbers.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.stats import norm

from .green import ExponentFit, fit_exponent, lemma_b1_integral
from .grid import GridSpec, ScalarField
from .mild import (
    mild_weights,
    sample_white_at,
    white_solution_covariance,
    white_solution_variance,
)
from .noise import (
    NoiseSpec,
    SeedPolicy,
    ZLaw,
    donsker_weights,
    kac_stroock_box,
    parity_covariance_exact,
    parity_lattice,
    sample_noise,
    sample_poisson_plane,
)

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
KOLMOGOROV_SD = math.sqrt(math.pi ** 2 / 12 - (math.pi / 2) * math.log(2) ** 2)
WHITE_LAB_MODES = 2048


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass
class ReportRow:
    n: int
    statistic: str
    value: float
    stderr: float
    replicas: int


@dataclass
class ConvergenceReport:
    check: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    status: str = INCONCLUSIVE

    def add(self, n, statistic, value, stderr, replicas):
        self.rows.append(ReportRow(int(n), statistic, float(value), float(stderr), int(replicas)))

    def finalize(self, status: str) -> "ConvergenceReport":
        self.rows.sort(key=lambda r: r.n)
        self.status = status
        return self

    def select(self, statistic: str) -> list:
        return [r for r in self.rows if r.statistic == statistic]

    def values(self, statistic: str) -> np.ndarray:
        return np.array([r.value for r in self.select(statistic)])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "statistic", "value", "stderr", "replicas"])
        for r in self.rows:
            w.writerow([r.n, r.statistic, repr(r.value), repr(r.stderr), r.replicas])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {"check": self.check, "status": self.status, "metadata": self.metadata,
                "rows": [asdict(r) for r in self.rows]}

    def to_json(self, path=None, manifest: dict | None = None) -> str:
        d = self.to_dict()
        if manifest is not None:
            d["manifest"] = manifest
        text = json.dumps(d, indent=2, sort_keys=True, default=_json_default) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialise {type(o)}")


def classify_upper(value: float, stderr: float, threshold: float, z: float = 2.0) -> str:
    """PASS when value + z*se <= threshold, FAIL when value - z*se > threshold, else INCONCLUSIVE."""
    if value + z * stderr <= threshold:
        return PASS
    if value - z * stderr > threshold:
        return FAIL
    return INCONCLUSIVE


def combine(statuses) -> str:
    statuses = list(statuses)
    if FAIL in statuses:
        return FAIL
    if INCONCLUSIVE in statuses:
        return INCONCLUSIVE
    return PASS


# --------------------------------------------------------------------------
# Replica plumbing
# --------------------------------------------------------------------------

_MODEL_CODE = {"white": 0, "kac_stroock": 1, "donsker": 2}


def stream_key(spec: NoiseSpec, purpose: int = 0) -> tuple:
    return (_MODEL_CODE[spec.model], spec.n or 0, purpose)


def replicate(fn, M: int, seed: int = 0, threads: int = 1, key: tuple = ()) -> np.ndarray:
    """``[fn(rng_r) for r in range(M)]`` with one independent stream per replica.

    Results depend only on (seed, key, r), so any thread count gives identical output.
    """
    policy = SeedPolicy(seed)

    def one(r):
        return fn(policy.stream(r, *key))

    if threads <= 1:
        out = [one(r) for r in range(M)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(one, range(M)))
    return np.asarray(out, dtype=float)


def lab_grid(spec: NoiseSpec, t_max: float, base: int = 16) -> GridSpec:
    """Grid resolving the noise: 1/n-aligned for Donsker, cells of side ~1/(4n) for Kac-Stroock."""
    if spec.model == "donsker":
        nx = spec.n * max(1, math.ceil(base / spec.n))
    elif spec.model == "kac_stroock":
        nx = max(4 * base, 4 * spec.n)
    else:
        nx = 4 * base
    nt = nx * t_max
    if abs(nt - round(nt)) > 1e-9:
        raise ValueError(f"t_max={t_max} does not give an integer number of time cells at nx={nx}")
    return GridSpec(t_max, int(round(nt)), nx)


class NoiseSampler:
    """Fast per-replica cell values of a noise model on a fixed grid."""

    def __init__(self, spec: NoiseSpec, grid: GridSpec):
        self.spec, self.grid = spec, grid
        if spec.model == "kac_stroock":
            r = math.sqrt(spec.n)
            self._box = kac_stroock_box(spec.n, grid.t_max)
            self._us, self._vs = r * grid.t_mid, r * grid.x_mid
            self._modulus = spec.n * np.sqrt(np.outer(grid.t_mid, grid.x_mid))
        elif spec.model == "donsker":
            n = spec.n
            self._ki = (grid.t_mid * n).astype(np.int64)
            self._kj = (grid.x_mid * n).astype(np.int64)

    def __call__(self, rng: np.random.Generator) -> np.ndarray:
        spec, grid = self.spec, self.grid
        if spec.model == "kac_stroock":
            pts = sample_poisson_plane(rng, *self._box)
            par = parity_lattice(pts, self._us, self._vs)
            return self._modulus * (1 - 2 * par)
        if spec.model == "donsker":
            z = donsker_weights(rng, spec.n, grid.t_max, spec.z_law)
            ki = np.minimum(self._ki, z.shape[0] - 1)
            kj = np.minimum(self._kj, z.shape[1] - 1)
            return spec.n * z[np.ix_(ki, kj)]
        return sample_noise(spec, rng, grid).values


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KSResult:
    statistic: float
    n_samples: int

    @property
    def stderr(self) -> float:
        return ks_stderr(self.n_samples)


def ks_stderr(M: int) -> float:
    """Asymptotic standard deviation of the one-sample KS statistic under the null."""
    return KOLMOGOROV_SD / math.sqrt(M)


def ks_statistic(samples, cdf) -> KSResult:
    """sup_x |F_M(x) - F(x)| for the empirical CDF of ``samples``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    M = len(x)
    if M < 50:
        raise ValueError(f"need at least 50 samples for a KS statistic, got {M}")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, M + 1)
    d = max(float(np.max(i / M - F)), float(np.max(F - (i - 1) / M)))
    return KSResult(min(max(d, 0.0), 1.0), M)


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / len(a)
    Fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(Fa - Fb)))


def gaussian_cdf(variance: float):
    sd = math.sqrt(variance)
    return lambda x: norm.cdf(np.asarray(x) / sd)


# --------------------------------------------------------------------------
# Test functions
# --------------------------------------------------------------------------

def _overlap(lo, hi, edges):
    return np.clip(np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1]), 0.0, None)


def _abs_sine_moment(q: float) -> float:
    # int_0^1 |sin(pi u)|^q du
    return gamma_fn((q + 1) / 2) / (math.sqrt(math.pi) * gamma_fn(q / 2 + 1))


class TestFunctionSpec:
    """A deterministic f on [0, T] x [0, 1] integrated against a noise."""

    __test__ = False  # keep pytest from collecting this class

    def cell_averages(self, grid: GridSpec) -> np.ndarray:
        raise NotImplementedError

    def lq_integral(self, q: float, t_max: float) -> float:
        """int int |f|^q over [0, T] x [0, 1]."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"variant": type(self).__name__}
        d.update(vars(self))
        return d


class ZeroFunction(TestFunctionSpec):
    def cell_averages(self, grid):
        return np.zeros(grid.shape("cell"))

    def lq_integral(self, q, t_max):
        return 0.0


@dataclass
class IndicatorRectangle(TestFunctionSpec):
    s0: float
    s1: float
    x0: float
    x1: float

    def __post_init__(self):
        if not (0 <= self.s0 < self.s1 and 0 <= self.x0 < self.x1 <= 1):
            raise ValueError("rectangle corners must be ordered inside the domain")

    def cell_averages(self, grid):
        ft = _overlap(self.s0, self.s1, grid.t_nodes) / grid.dt
        fx = _overlap(self.x0, self.x1, grid.x_nodes) / grid.dx
        return np.outer(ft, fx)

    def lq_integral(self, q, t_max):
        return (min(self.s1, t_max) - min(self.s0, t_max)) * (self.x1 - self.x0)


@dataclass
class SmoothSine(TestFunctionSpec):
    """f(s, y) = sin(j pi s / T) sin(k pi y)."""

    j: int
    k: int
    t_max: float = 1.0

    def __post_init__(self):
        if self.j < 1 or self.k < 1:
            raise ValueError("sine indices must be >= 1")

    def cell_averages(self, grid):
        if abs(grid.t_max - self.t_max) > 1e-12:
            raise ValueError("SmoothSine period must match the grid horizon")
        a = self.j * math.pi / self.t_max
        b = self.k * math.pi
        te, xe = grid.t_nodes, grid.x_nodes
        ft = (np.cos(a * te[:-1]) - np.cos(a * te[1:])) / (a * grid.dt)
        fx = (np.cos(b * xe[:-1]) - np.cos(b * xe[1:])) / (b * grid.dx)
        return np.outer(ft, fx)

    def lq_integral(self, q, t_max):
        return self.t_max * _abs_sine_moment(q) ** 2


@dataclass
class GreenSection(TestFunctionSpec):
    """f(s, y) = 1_{[0, t*]}(s) G_{t* - s}(x*, y); integrating it against theta gives X(t*, x*)."""

    t_star: float
    x_star: float

    def cell_averages(self, grid):
        i, j = grid.node_index(self.t_star, self.x_star)
        return mild_weights(grid, i, j) / grid.cell_area

    def lq_integral(self, q, t_max):
        if q == 2:
            return float(white_solution_variance(self.t_star, self.x_star))
        return lemma_b1_integral("tail", q, s=0.0, t=self.t_star, x=self.x_star)


@dataclass
class RectangleSpec:
    s0: float
    s1: float
    x0: float
    x1: float
    doubling: bool = True
    k: float = 2.0

    def __post_init__(self):
        if not (0 < self.s0 < self.s1 and 0 < self.x0 < self.x1 <= 1):
            raise ValueError("rectangle needs 0 < s0 < s0' and 0 < x0 < x0' <= 1")
        if self.doubling and not (self.s1 < self.k * self.s0 and self.x1 < self.k * self.x0):
            raise ValueError(
                f"rectangle violates 0 < s0 < s0' < {self.k:g} s0 and 0 < x0 < x0' < {self.k:g} x0"
            )

    def indicator(self) -> IndicatorRectangle:
        return IndicatorRectangle(self.s0, self.s1, self.x0, self.x1)

    @property
    def alpha(self) -> float:
        """Smallest alpha >= 1 with x0' <= 2^alpha x0."""
        return max(1.0, math.log2(self.x1 / self.x0))

    @property
    def second_moment_bound(self) -> float:
        a = self.alpha
        return 0.75 * (2 ** (a + 1) - 1)


def restricted_l2(f: TestFunctionSpec, rect: RectangleSpec, grid: GridSpec) -> tuple[np.ndarray, float]:
    """Cell averages of f 1_rect and the grid value of int int_rect f^2."""
    ind = rect.indicator().cell_averages(grid)
    fa = f.cell_averages(grid) * ind
    if isinstance(f, IndicatorRectangle):
        inter = IndicatorRectangle(max(f.s0, rect.s0), max(min(f.s1, rect.s1), max(f.s0, rect.s0) + 1e-300),
                                   max(f.x0, rect.x0), max(min(f.x1, rect.x1), max(f.x0, rect.x0) + 1e-300))
        l2 = inter.lq_integral(2, grid.t_max)
    else:
        # cell-average quadrature of f^2 on the rectangle (exact for aligned indicators)
        l2 = float(np.sum(f.cell_averages(grid) ** 2 * ind) * grid.cell_area)
    return fa, l2


def linear_functional(theta: ScalarField, f: TestFunctionSpec) -> float:
    """int int f theta over the whole domain, with theta constant on cells."""
    cells = theta.to_cells().values
    return float(np.sum(f.cell_averages(theta.grid) * cells) * theta.grid.cell_area)


# --------------------------------------------------------------------------
# Finite-dimensional distributions
# --------------------------------------------------------------------------

def _mild_samples(spec: NoiseSpec, points, M, seed, threads, t_max, grid=None, white_modes=WHITE_LAB_MODES):
    """M x len(points) samples of X_n (or X) at the given nodes."""
    if spec.model == "white":
        times = sorted({p[0] for p in points})
        xs = sorted({p[1] for p in points})
        ti = [times.index(p[0]) for p in points]
        xi = [xs.index(p[1]) for p in points]

        def one(rng):
            v = sample_white_at(rng, times, xs, white_modes)
            return v[ti, xi]
        return replicate(one, M, seed, threads, stream_key(spec)), None
    grid = grid or lab_grid(spec, t_max)
    weights = [mild_weights(grid, *grid.node_index(t, x)) for t, x in points]
    sampler = NoiseSampler(spec, grid)

    def one(rng):
        cells = sampler(rng)
        return [float(np.vdot(w, cells)) for w in weights]
    return replicate(one, M, seed, threads, stream_key(spec)), grid


def fdd_convergence(noise_family, points, M: int = 2000, seed: int = 0, threads: int = 1,
                    threshold: float = 0.05, t_max: float | None = None, grids: dict | None = None,
                    white_modes: int = WHITE_LAB_MODES) -> ConvergenceReport:
    """KS distance of X_n marginals (and one random 2-point projection) to the exact Gaussian law.

    PASS when the KS statistic at the first point is non-increasing in n up to
    2 standard errors and its last value is <= ``threshold``.
    """
    if M < 500:
        raise ValueError(f"fdd_convergence needs M >= 500 replicas, got {M}")
    points = [tuple(map(float, p)) for p in points]
    if not points:
        raise ValueError("need at least one evaluation point")
    t_max = t_max or max(p[0] for p in points)
    family = list(noise_family)
    se = ks_stderr(M)
    report = ConvergenceReport("fdd", metadata={"points": points, "replicas": M, "seed": seed,
                                                "threshold": threshold, "t_max": t_max})
    # Cramer-Wold projection with coefficients drawn once from the seed
    coef = SeedPolicy(seed).stream(0, 99).normal(size=len(points))
    exact = [white_solution_variance(t, x) for t, x in points]
    proj_var = 0.0
    for a in range(len(points)):
        for b in range(len(points)):
            c = exact[a] if a == b else white_solution_covariance(points[a], points[b])
            proj_var += coef[a] * coef[b] * c
    report.metadata["projection"] = {"coefficients": coef.tolist(), "variance": proj_var}
    ks_first = []
    for idx, spec in enumerate(family):
        grid = (grids or {}).get(spec.n) if grids else None
        samples, used = _mild_samples(spec, points, M, seed, threads, t_max, grid, white_modes)
        n = spec.n or 0
        for p, (t, x) in enumerate(points):
            var = (white_solution_variance(t, x, white_modes) if spec.model == "white" else exact[p])
            ks = ks_statistic(samples[:, p], gaussian_cdf(var))
            report.add(n, f"ks_marginal({t:g},{x:g})", ks.statistic, se, M)
            if p == 0:
                ks_first.append(ks.statistic)
        if len(points) > 1:
            ks = ks_statistic(samples @ coef, gaussian_cdf(proj_var))
            report.add(n, "ks_projection", ks.statistic, se, M)
        if used is not None:
            report.metadata.setdefault("grids", {})[str(n)] = used.to_dict()
    monotone = all(ks_first[i + 1] <= ks_first[i] + 2 * se for i in range(len(ks_first) - 1))
    status = classify_upper(ks_first[-1], se, threshold)
    if not monotone:
        status = FAIL
    return report.finalize(status)


# --------------------------------------------------------------------------
# Moment hypotheses
# --------------------------------------------------------------------------

def _functional_samples(spec: NoiseSpec, fa_list, grid: GridSpec, M, seed, threads, purpose=1):
    sampler = NoiseSampler(spec, grid)
    area = grid.cell_area

    def one(rng):
        cells = sampler(rng)
        return [float(np.vdot(fa, cells)) * area for fa in fa_list]
    return replicate(one, M, seed, threads, stream_key(spec, purpose)).reshape(M, len(fa_list))


def _bootstrap_se(x: np.ndarray, stat, B: int = 200, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    M = len(x)
    vals = np.array([stat(x[rng.integers(0, M, M)]) for _ in range(B)])
    return float(vals.std(ddof=1))


def hypothesis2_check(noise: NoiseSpec, f_set, p: float, n_list, M: int = 2000, seed: int = 0,
                      threads: int = 1, t_max: float = 1.0, growth_factor: float = 4.0) -> ConvergenceReport:
    """Ratio E(int int f theta_n)^2 / (int int |f|^{2p})^{1/p} for each f and n.

    PASS when, for every f, the largest ratio over n is at most
    ``growth_factor`` times the ratio at the first n.
    """
    if not p > 1:
        raise ValueError(
            f"p={p}: the second-moment bound is only established for p > 1; p = 1 is not covered"
        )
    f_set = list(f_set)
    n_list = sorted(n_list)
    report = ConvergenceReport("hyp2", metadata={"noise": noise.model, "p": p, "replicas": M,
                                                 "functions": [f.to_dict() for f in f_set]})
    ratios = {i: [] for i in range(len(f_set))}
    for n in n_list:
        spec = NoiseSpec(noise.model, n, noise.z_law)
        grid = lab_grid(spec, t_max)
        fas = [f.cell_averages(grid) for f in f_set]
        J = _functional_samples(spec, fas, grid, M, seed, threads)
        for i, f in enumerate(f_set):
            denom = f.lq_integral(2 * p, t_max) ** (1.0 / p)
            sq = J[:, i] ** 2
            if denom == 0:
                r, se = 0.0, 0.0
            else:
                r, se = sq.mean() / denom, sq.std(ddof=1) / math.sqrt(M) / denom
            ratios[i].append((r, se))
            report.add(n, f"ratio[f{i}]", r, se, M)
    statuses = []
    for i, rs in ratios.items():
        first = rs[0][0]
        worst = max(rs, key=lambda t: t[0])
        if first == 0 and worst[0] == 0:
            statuses.append(PASS)
            continue
        statuses.append(classify_upper(worst[0], worst[1], growth_factor * first))
    return report.finalize(combine(statuses))


def hypothesis3_check(noise: NoiseSpec, f: TestFunctionSpec, rect: RectangleSpec, m: int, n_list,
                      M: int = 2000, seed: int = 0, threads: int = 1, t_max: float | None = None,
                      stability: float = 5.0, bootstrap: int = 200) -> ConvergenceReport:
    """m-th moment of int int_rect f theta_n over (int int_rect f^2)^{m/2}, per n.

    For m = 2 and Kac-Stroock noise every ratio must stay below the
    rectangle's second-moment constant plus 3 standard errors; otherwise the
    ratios must be stable across n (max/min <= ``stability``).
    """
    if m < 2 or m % 2:
        raise ValueError("m must be an even integer >= 2")
    if not isinstance(rect, RectangleSpec):
        raise TypeError("rect must be a RectangleSpec")
    t_max = t_max or rect.s1
    n_list = sorted(n_list)
    report = ConvergenceReport("hyp3", metadata={"noise": noise.model, "m": m, "rect": asdict(rect),
                                                 "f": f.to_dict(), "replicas": M,
                                                 "second_moment_bound": rect.second_moment_bound})
    rows = []
    for n in n_list:
        spec = NoiseSpec(noise.model, n, noise.z_law)
        grid = lab_grid(spec, t_max)
        fa, l2 = restricted_l2(f, rect, grid)
        J = _functional_samples(spec, [fa], grid, M, seed, threads, purpose=2)[:, 0]
        if l2 == 0:
            ratio, se = 0.0, 0.0
        else:
            mom = np.mean(J ** m)
            ratio = mom / l2 ** (m / 2)
            se = _bootstrap_se(J, lambda s: np.mean(s ** m), bootstrap, seed) / l2 ** (m / 2)
        rows.append((ratio, se))
        report.add(n, f"moment_ratio(m={m})", ratio, se, M)
    if all(r == 0 for r, _ in rows):
        return report.finalize(PASS)
    if m == 2 and noise.model == "kac_stroock":
        bound = rect.second_moment_bound
        status = combine(classify_upper(r, se, bound, z=3.0) if r - 3 * se > bound else PASS
                         for r, se in rows)
    else:
        vals = [r for r, _ in rows]
        status = PASS if max(vals) <= stability * min(vals) else FAIL
    return report.finalize(status)


def donsker_moment_check(n_list, m: int, f_set, M: int = 2000, z_law: ZLaw = ZLaw.RADEMACHER,
                         seed: int = 0, threads: int = 1, t_max: float = 1.0,
                         stability: float = 3.0, bootstrap: int = 200) -> ConvergenceReport:
    """E(int int f theta_n)^m / (int int f^2)^{m/2} over the whole domain for Donsker kernels.

    m = 2: PASS when the last ratio matches the exact aligned-grid value
    sum_c (int_c f)^2 / int f^2 within 3 standard errors.  m >= 4: PASS when
    max/min across n <= ``stability``.
    """
    if m < 2 or m % 2:
        raise ValueError("m must be an even integer >= 2")
    f_set = list(f_set)
    n_list = sorted(n_list)
    report = ConvergenceReport("donsker", metadata={"m": m, "z_law": z_law.value, "replicas": M,
                                                    "functions": [f.to_dict() for f in f_set]})
    per_f = {i: [] for i in range(len(f_set))}
    for n in n_list:
        spec = NoiseSpec.donsker(n, z_law)
        grid = lab_grid(spec, t_max)
        fas = [f.cell_averages(grid) for f in f_set]
        J = _functional_samples(spec, fas, grid, M, seed, threads, purpose=3)
        for i, f in enumerate(f_set):
            l2 = f.lq_integral(2, t_max)
            if l2 == 0:
                per_f[i].append((0.0, 0.0, 0.0))
                report.add(n, f"moment_ratio[f{i}]", 0.0, 0.0, M)
                continue
            ratio = np.mean(J[:, i] ** m) / l2 ** (m / 2)
            se = _bootstrap_se(J[:, i], lambda s: np.mean(s ** m), bootstrap, seed) / l2 ** (m / 2)
            # exact second moment on an aligned grid: sum over 1/n cells of (int_c f)^2
            coarse = _coarse_integrals(fas[i] * grid.cell_area, grid, n)
            exact2 = float(np.sum(coarse ** 2) * n * n) / l2
            per_f[i].append((ratio, se, exact2))
            report.add(n, f"moment_ratio[f{i}]", ratio, se, M)
            if m == 2:
                report.add(n, f"exact_ratio[f{i}]", exact2, 1e-300, M)
    statuses = []
    for i, rows in per_f.items():
        if all(r == 0 for r, _, _ in rows):
            statuses.append(PASS)
        elif m == 2:
            r, se, ex = rows[-1]
            statuses.append(PASS if abs(r - ex) <= 3 * se else FAIL)
        else:
            vals = [r for r, _, _ in rows]
            statuses.append(PASS if max(vals) <= stability * min(vals) else FAIL)
    return report.finalize(combine(statuses))


def _coarse_integrals(cell_integrals: np.ndarray, grid: GridSpec, n: int) -> np.ndarray:
    """Sum grid-cell integrals into the 1/n Donsker cells (grid must be aligned)."""
    ki = (grid.t_mid * n).astype(np.int64)
    kj = (grid.x_mid * n).astype(np.int64)
    out = np.zeros((ki.max() + 1, kj.max() + 1))
    np.add.at(out, (ki[:, None], kj[None, :]), cell_integrals)
    return out


# --------------------------------------------------------------------------
# Increment scaling (tightness)
# --------------------------------------------------------------------------

@dataclass
class IncrementMoments:
    separations: np.ndarray
    moments: np.ndarray
    stderr: np.ndarray
    fit: ExponentFit


def increment_moments(noise: NoiseSpec, m: int, axis: str, anchor, separations, M: int = 4000,
                      seed: int = 0, threads: int = 1, t_max: float | None = None,
                      white_modes: int = WHITE_LAB_MODES) -> IncrementMoments:
    """Empirical E|X(p + h) - X(p)|^m along one axis, and its log-log slope in h.

    Space increments go toward larger x (smaller if that leaves [0, 1]);
    time increments compare X(t - h, x) with X(t, x).
    """
    if m not in (2, 4):
        raise ValueError("m must be 2 or 4")
    if axis not in ("space", "time"):
        raise ValueError("axis must be 'space' or 'time'")
    t0, x0 = map(float, anchor)
    if not (0 < t0 and 0 < x0 < 1):
        raise ValueError("anchor must be interior")
    hs = np.asarray(sorted(set(map(float, separations))))
    if len(hs) < 4 or np.any(hs <= 0) or len(hs) != len(list(separations)):
        raise ValueError("need at least 4 distinct positive separations")
    pts = [(t0, x0)]
    for h in hs:
        if axis == "space":
            x1 = x0 + h if x0 + h <= 1 else x0 - h
            if not 0 <= x1 <= 1:
                raise ValueError(f"separation {h} leaves [0, 1]")
            pts.append((t0, x1))
        else:
            if t0 - h < 0:
                raise ValueError(f"separation {h} reaches before t = 0")
            pts.append((t0 - h, x0))
    t_max = t_max or t0
    samples, _ = _mild_samples(noise, pts, M, seed, threads, t_max, None, white_modes)
    d = np.abs(samples[:, 1:] - samples[:, :1]) ** m
    mom = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / math.sqrt(M)
    fit = fit_exponent(zip(hs, mom))
    return IncrementMoments(hs, mom, se, fit)


def increment_scaling(noise: NoiseSpec, m: int, axis: str, anchor, separations, M: int = 4000,
                      **kw) -> ExponentFit:
    return increment_moments(noise, m, axis, anchor, separations, M, **kw).fit


# --------------------------------------------------------------------------
# Covariance-integrability counterexample
# --------------------------------------------------------------------------

def _graded_gl(lo: float, hi: float, toward: str, levels: int = 20, nodes: int = 8):
    """Gauss-Legendre nodes on [lo, hi] graded geometrically (ratio 2) toward one or both ends."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    if hi <= lo:
        return np.empty(0), np.empty(0)
    if toward == "both":
        mid = 0.5 * (lo + hi)
        a = _graded_gl(lo, mid, "lo", levels, nodes)
        b = _graded_gl(mid, hi, "hi", levels, nodes)
        return np.concatenate([a[0], b[0]]), np.concatenate([a[1], b[1]])
    L = hi - lo
    edges = [L / 2 ** l for l in range(levels + 1)] + [0.0]
    xs, ws = [], []
    for a, b in zip(edges[1:], edges[:-1]):
        h = 0.5 * (b - a)
        off = a + h * (gx + 1.0)
        xs.append(lo + off if toward == "lo" else hi - off)
        ws.append(h * gw)
    return np.concatenate(xs), np.concatenate(ws)


def manthey_integral(n: int, T: float = 1.0, x: float | None = None, levels: int = 20,
                     nodes: int = 8) -> float:
    """I(n, T, x) = int_0^T int_x^1 n^2 sqrt(s y T x) exp(-2n[(T - s) x + (y - x) s]) dy ds.

    Defaults to x = 1/n.  Tensor Gauss-Legendre rule graded geometrically toward
    both ends in s and toward y = x in y.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    x = 1.0 / n if x is None else float(x)
    if not 0 < x <= 1:
        raise ValueError("x must lie in (0, 1]")
    if x == 1.0:
        return 0.0
    s, ws = _graded_gl(0.0, T, "both", levels, nodes)
    y, wy = _graded_gl(x, 1.0, "lo", levels, nodes)
    S, Y = np.meshgrid(s, y, indexing="ij")
    f = n * n * np.sqrt(S * Y * T * x) * np.exp(-2.0 * n * ((T - S) * x + (Y - x) * S))
    return float(ws @ f @ wy)


def manthey_report(n_list, T: float = 1.0, ratio_target: float | None = None) -> ConvergenceReport:
    """I(n, T, 1/n) across n with a quadrature-error estimate; PASS when strictly increasing."""
    n_list = sorted(n_list)
    report = ConvergenceReport("manthey", metadata={"T": T, "x": "1/n"})
    vals = []
    for n in n_list:
        v = manthey_integral(n, T)
        err = abs(manthey_integral(n, T, nodes=12) - v)
        vals.append(v)
        report.add(n, "I(n,T,1/n)", v, max(err, 1e-15 * abs(v)), 1)
    increasing = all(b > a for a, b in zip(vals, vals[1:]))
    ratio = vals[-1] / vals[0]
    report.metadata["ratio_last_first"] = ratio
    ok = increasing and (ratio_target is None or ratio >= ratio_target)
    return report.finalize(PASS if ok else FAIL)


def kac_stroock_covariance_mass(n: int, t: float, x: float, T: float = 1.0,
                                levels: int = 20, nodes: int = 8) -> float:
    """int_0^T int_0^1 |E theta_n(s, y) theta_n(t, x)| dy ds from the exact parity correlation."""
    total = 0.0
    s_parts = [(0.0, t), (t, T)]
    y_parts = [(0.0, x), (x, 1.0)]
    for slo, shi in s_parts:
        if shi <= slo:
            continue
        s, ws = _graded_gl(slo, shi, "both", levels, nodes)
        for ylo, yhi in y_parts:
            if yhi <= ylo:
                continue
            y, wy = _graded_gl(ylo, yhi, "both", levels, nodes)
            S, Y = np.meshgrid(s, y, indexing="ij")
            f = n * n * np.sqrt(S * Y * t * x) * parity_covariance_exact(n, S, Y, t, x)
            total += float(ws @ f @ wy)
    return total


def donsker_covariance_mass(n: int, t: float, x: float, T: float = 1.0) -> float:
    """Grid value of int int |E theta_n(s, y) theta_n(t, x)| = n^2 |1/n-cell of (t, x) within the domain|."""
    grid = lab_grid(NoiseSpec.donsker(n), T)
    ki = (grid.t_mid * n).astype(np.int64)
    kj = (grid.x_mid * n).astype(np.int64)
    ct = min(int(t * n), int(math.ceil(n * T)) - 1)
    cx = min(int(x * n), n - 1)
    same = np.outer(ki == ct, kj == cx)
    return float(n * n * same.sum() * grid.cell_area)


def manthey_conditions_report(noise: NoiseSpec, n_list, M: int = 500, seed: int = 0,
                              threads: int = 1, T: float = 1.0) -> ConvergenceReport:
    """Empirical look at the correlated-noise conditions (i), (iii) and (iv).

    (i)   grid L2 norm of theta_n paths (finite, with replica spread),
    (iii) replica mean of theta_n at the centre cell,
    (iv)  covariance mass int int |E theta_n(s,y) theta_n(t,x)| at (t, x) = (T, 1/n).

    Kac-Stroock PASSes when (iv) increases strictly with n, Donsker when
    (iv) is bounded (max/min <= 2), white noise when (iii) is 0 within 3 se.
    """
    n_list = sorted(n_list) if noise.model != "white" else [0]
    report = ConvergenceReport("conditions", metadata={"noise": noise.model, "T": T, "replicas": M})
    cond_iv, iii_ok = [], True
    for n in n_list:
        spec = noise if noise.model == "white" else NoiseSpec(noise.model, n, noise.z_law)
        grid = lab_grid(spec, T)
        sampler = NoiseSampler(spec, grid)
        ci, cj = grid.nt // 2, grid.nx // 2

        def one(rng):
            cells = sampler(rng)
            return [float(np.sum(cells ** 2) * grid.cell_area), float(cells[ci, cj])]
        out = replicate(one, M, seed, threads, stream_key(spec, 4)).reshape(M, 2)
        l2 = out[:, 0]
        report.add(n, "(i) path L2 norm^2", l2.mean(), l2.std(ddof=1) / math.sqrt(M), M)
        c = out[:, 1]
        mean, se = c.mean(), c.std(ddof=1) / math.sqrt(M)
        report.add(n, "(iii) mean at centre", mean, se, M)
        if noise.model == "white":
            iii_ok = abs(mean) <= 3 * se
            continue
        if noise.model == "kac_stroock":
            v = kac_stroock_covariance_mass(n, T, 1.0 / n, T)
            err = abs(kac_stroock_covariance_mass(n, T, 1.0 / n, T, nodes=12) - v)
        else:
            v = donsker_covariance_mass(n, T, 1.0 / n, T)
            err = 0.0
        cond_iv.append(v)
        report.add(n, "(iv) covariance mass at (T,1/n)", v, max(err, 1e-15 * v), 1)
    if noise.model == "white":
        status = PASS if iii_ok else FAIL
    elif noise.model == "kac_stroock":
        status = PASS if all(b > a for a, b in zip(cond_iv, cond_iv[1:])) else FAIL
    else:
        status = PASS if max(cond_iv) <= 2 * min(cond_iv) else FAIL
    return report.finalize(status)
