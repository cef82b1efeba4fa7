"""Noise inputs: Brownian sheet, Kac-Stroock parity process and Donsker kernels.

All samplers take an explicit ``numpy.random.Generator``; ``SeedPolicy``
derives one independent generator per Monte Carlo replica so that results do
not depend on the order in which replicas are executed.
"""
from __future__ import annotations

import enum
import io
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError
from .grid import GridSpec, ScalarField

MAX_EXPECTED_POINTS = 1e8


# --------------------------------------------------------------------------
# Seeds and laws
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedPolicy:
    """Replica-indexed random streams derived from one 64-bit master seed."""

    master_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")

    def stream(self, replica: int, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(replica), *map(int, keys)))
        return np.random.Generator(np.random.PCG64(ss))


class ZLaw(enum.Enum):
    """Centred, unit-variance laws for the Donsker weights Z_k."""

    RADEMACHER = "rademacher"
    CENTERED_UNIFORM = "centered_uniform"
    SHIFTED_EXPONENTIAL = "shifted_exponential"

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self is ZLaw.RADEMACHER:
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        if self is ZLaw.CENTERED_UNIFORM:
            r = math.sqrt(3.0)
            return rng.uniform(-r, r, size=size)
        return rng.exponential(1.0, size=size) - 1.0

    def absolute_moment(self, m: int) -> float:
        """E|Z|^m in closed form."""
        if self is ZLaw.RADEMACHER:
            return 1.0
        if self is ZLaw.CENTERED_UNIFORM:
            return 3.0 ** (m / 2) / (m + 1)
        # |E - 1|^m for E ~ Exp(1): int_0^1 (1-u)^m e^{-u} du + int_1^inf (u-1)^m e^{-u} du
        from scipy.integrate import quad
        lo = quad(lambda u: (1 - u) ** m * math.exp(-u), 0, 1)[0]
        return lo + math.gamma(m + 1) / math.e


@dataclass(frozen=True)
class NoiseSpec:
    model: str
    n: int | None = None
    z_law: ZLaw = ZLaw.RADEMACHER

    MODELS = ("white", "kac_stroock", "donsker")

    def __post_init__(self):
        model = self.model.lower().replace("-", "_")
        if model not in self.MODELS:
            raise ValueError(f"unknown noise model {self.model!r}; expected one of {self.MODELS}")
        object.__setattr__(self, "model", model)
        if model != "white":
            if self.n is None or int(self.n) != self.n or self.n < 1:
                raise ValueError(f"{model} noise needs an integer index n >= 1, got {self.n}")
            object.__setattr__(self, "n", int(self.n))
        if isinstance(self.z_law, str):
            object.__setattr__(self, "z_law", ZLaw(self.z_law))

    @classmethod
    def white(cls) -> "NoiseSpec":
        return cls("white")

    @classmethod
    def kac_stroock(cls, n: int) -> "NoiseSpec":
        return cls("kac_stroock", n)

    @classmethod
    def donsker(cls, n: int, z_law: ZLaw = ZLaw.RADEMACHER) -> "NoiseSpec":
        return cls("donsker", n, z_law)

    def to_dict(self) -> dict:
        d = {"model": self.model}
        if self.model != "white":
            d["n"] = self.n
        if self.model == "donsker":
            d["z_law"] = self.z_law.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(d["model"], d.get("n"), ZLaw(d.get("z_law", "rademacher")))


# --------------------------------------------------------------------------
# Planar Poisson process and dominance parity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PoissonPointSet:
    box: tuple[float, float]
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        U, V = self.box
        if len(pts) and (pts.min() < 0 or pts[:, 0].max() > U or pts[:, 1].max() > V):
            raise ValueError("points must lie inside the box")
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        pts = pts[order]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return len(self.points)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("u,v\n")
        for u, v in self.points.tolist():
            buf.write(f"{u!r},{v!r}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def sample_poisson_plane(rng: np.random.Generator, U: float, V: float) -> PoissonPointSet:
    """Unit-intensity Poisson process on [0, U] x [0, V]."""
    if not (U > 0 and V > 0):
        raise ValueError(f"box extents must be positive, got ({U}, {V})")
    count = rng.poisson(U * V)
    u = rng.uniform(0.0, U, size=count)
    v = rng.uniform(0.0, V, size=count)
    return PoissonPointSet((float(U), float(V)), np.column_stack([u, v]))


class _Fenwick:
    def __init__(self, size: int):
        self.size = size
        self.tree = [0] * (size + 1)

    def add(self, i: int, delta: int = 1):
        while i <= self.size:
            self.tree[i] += delta
            i += i & -i

    def prefix(self, i: int) -> int:
        s = 0
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s


def _check_queries(pps: PoissonPointSet, queries) -> np.ndarray:
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    U, V = pps.box
    if len(q) and (q.min() < 0 or q[:, 0].max() > U or q[:, 1].max() > V):
        raise ValueError("query outside the Poisson box")
    return q


def dominance_count(pps: PoissonPointSet, queries) -> np.ndarray:
    """Number of points (u, v) with u <= t and v <= x for each query (t, x).

    Offline sweep in t with a Fenwick tree over the ranks of v:
    O((P + Q) log(P + Q)).
    """
    q = _check_queries(pps, queries)
    pts = pps.points
    sorted_v = sorted(pts[:, 1].tolist())
    tree = _Fenwick(len(sorted_v))
    point_rank = [bisect_right(sorted_v, v) for v in pts[:, 1].tolist()]
    out = np.zeros(len(q), dtype=np.int64)
    order = np.argsort(q[:, 0], kind="stable")
    us = pts[:, 0].tolist()
    p = 0
    for qi in order.tolist():
        t, x = q[qi]
        while p < len(us) and us[p] <= t:
            tree.add(point_rank[p])
            p += 1
        out[qi] = tree.prefix(bisect_right(sorted_v, x))
    return out


def parity_count(pps: PoissonPointSet, queries) -> np.ndarray:
    """Parity (0 or 1) of the dominated point count for each query."""
    return dominance_count(pps, queries) & 1


def parity_lattice(pps: PoissonPointSet, us, vs) -> np.ndarray:
    """Parities on the tensor lattice us x vs (both ascending), shape (len(us), len(vs)).

    Each point is binned at the first lattice query that dominates it and a
    2-D prefix sum turns the bins into dominance counts: O(P + |us| |vs|).
    """
    us = np.asarray(us, dtype=float)
    vs = np.asarray(vs, dtype=float)
    iu = np.searchsorted(us, pps.points[:, 0], side="left")
    iv = np.searchsorted(vs, pps.points[:, 1], side="left")
    keep = (iu < len(us)) & (iv < len(vs))
    flat = np.bincount(iu[keep] * len(vs) + iv[keep], minlength=len(us) * len(vs))
    counts = flat.reshape(len(us), len(vs)).cumsum(axis=0).cumsum(axis=1)
    return counts & 1


def parity_covariance_exact(n, s, y, t, x):
    """E[(-1)^{N_n(s,y) + N_n(t,x)}] with N_n(t,x) = N(sqrt(n) t, sqrt(n) x).

    The sum has the parity of the points in the symmetric difference of the two
    dominated rectangles, whose scaled area is n (tx + sy - 2 min(s,t) min(x,y)).
    """
    s, y, t, x = (np.asarray(a, dtype=float) for a in (s, y, t, x))
    area = np.where(
        s <= t,
        np.where(y <= x, (t - s) * x + (x - y) * s, (t - s) * x + (y - x) * s),
        np.where(y <= x, (s - t) * y + (x - y) * t, (s - t) * y + (y - x) * t),
    )
    out = np.exp(-2.0 * n * area)
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Noise fields on a grid (cell-midpoint layout)
# --------------------------------------------------------------------------

def kac_stroock_box(n: int, t_max: float) -> tuple[float, float]:
    r = math.sqrt(n)
    return (r * t_max, r)


def kac_stroock_field(rng: np.random.Generator, n: int, grid: GridSpec,
                      points: PoissonPointSet | None = None) -> ScalarField:
    """theta_n(t, x) = n sqrt(tx) (-1)^{N(sqrt(n) t, sqrt(n) x)} at cell midpoints.

    One Poisson realisation on [0, sqrt(n) T] x [0, sqrt(n)] serves the whole grid;
    pass ``points`` to reuse an existing realisation.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n}")
    if n * grid.t_max > MAX_EXPECTED_POINTS:
        raise CapacityError(
            f"n*T = {n * grid.t_max:.3g} expected Poisson points exceeds the guard {MAX_EXPECTED_POINTS:.0e}"
        )
    if points is None:
        points = sample_poisson_plane(rng, *kac_stroock_box(n, grid.t_max))
    r = math.sqrt(n)
    par = parity_lattice(points, r * grid.t_mid, r * grid.x_mid)
    modulus = n * np.sqrt(np.outer(grid.t_mid, grid.x_mid))
    values = np.where(par == 1, -modulus, modulus)
    return ScalarField(grid, values, "cell", meta={"noise": "kac_stroock", "n": int(n), "points": points.count})


def donsker_weights(rng: np.random.Generator, n: int, t_max: float, z_law: ZLaw = ZLaw.RADEMACHER) -> np.ndarray:
    """Z_k for the 1/n cells meeting [0, T] x [0, 1]; shape (ceil(nT), n)."""
    return z_law.sample(rng, (int(math.ceil(n * t_max - 1e-12)), int(n)))


def donsker_field(rng: np.random.Generator, n: int, grid: GridSpec,
                  z_law: ZLaw = ZLaw.RADEMACHER) -> ScalarField:
    """theta_n = n Z_k on the 1/n-cell containing each grid-cell midpoint."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be an integer >= 1, got {n}")
    z = donsker_weights(rng, n, grid.t_max, z_law)
    ki = np.minimum((grid.t_mid * n).astype(np.int64), z.shape[0] - 1)
    kj = np.minimum((grid.x_mid * n).astype(np.int64), z.shape[1] - 1)
    values = n * z[np.ix_(ki, kj)]
    return ScalarField(grid, values, "cell",
                       meta={"noise": "donsker", "n": int(n), "z_law": z_law.value, "aligned": grid.is_aligned(n)})


def brownian_sheet_increments(rng: np.random.Generator, grid: GridSpec) -> np.ndarray:
    """Independent N(0, dt dx) Brownian-sheet increments over the grid cells, shape (nt, nx)."""
    return rng.normal(0.0, math.sqrt(grid.cell_area), size=grid.shape("cell"))


def brownian_sheet(increments: np.ndarray) -> np.ndarray:
    """Node values W(t_i, x_j) from cell increments (zero on the axes)."""
    nt, nx = increments.shape
    W = np.zeros((nt + 1, nx + 1))
    W[1:, 1:] = increments.cumsum(axis=0).cumsum(axis=1)
    return W


def white_noise_field(rng: np.random.Generator, grid: GridSpec) -> ScalarField:
    """Cell-averaged white noise dW / (dt dx); integrates to the Brownian sheet exactly."""
    inc = brownian_sheet_increments(rng, grid)
    return ScalarField(grid, inc / grid.cell_area, "cell", meta={"noise": "white"})


def sample_noise(spec: NoiseSpec, rng: np.random.Generator, grid: GridSpec) -> ScalarField:
    if spec.model == "white":
        return white_noise_field(rng, grid)
    if spec.model == "kac_stroock":
        return kac_stroock_field(rng, spec.n, grid)
    return donsker_field(rng, spec.n, grid, spec.z_law)


def integrate_zeta(theta: ScalarField, t: float, x: float) -> float:
    """zeta(t, x) = int_0^t int_0^x theta, by the cell-midpoint rule; (t, x) must be a node."""
    if theta.layout != "cell":
        theta = theta.to_cells()
    i, j = theta.grid.node_index(t, x)
    return float(theta.values[:i, :j].sum() * theta.grid.cell_area)
