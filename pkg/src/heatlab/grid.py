"""Uniform space-time lattice on [0, T] x [0, 1] and fields living on it.

Two layouts are used throughout the package:

* ``"node"`` -- an ``(nt + 1, nx + 1)`` array of values at the lattice nodes
  ``(i * T / nt, j / nx)``.  Solutions (X, U, ...) live here.
* ``"cell"`` -- an ``(nt, nx)`` array of values sampled at cell midpoints
  ``((i + 1/2) dt, (j + 1/2) dx)``.  Noise inputs live here, and every
  quadrature in the package treats them as constant on each cell.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

LAYOUTS = ("node", "cell")


@dataclass(frozen=True)
class GridSpec:
    t_max: float
    nt: int
    nx: int

    def __post_init__(self):
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max}")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ValueError(f"nt must be an integer >= 1, got {self.nt}")
        if int(self.nx) != self.nx or self.nx < 1:
            raise ValueError(f"nx must be an integer >= 1, got {self.nx}")
        object.__setattr__(self, "t_max", float(self.t_max))
        object.__setattr__(self, "nt", int(self.nt))
        object.__setattr__(self, "nx", int(self.nx))

    @property
    def dt(self) -> float:
        return self.t_max / self.nt

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def cell_area(self) -> float:
        return self.dt * self.dx

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.nt + 1) * self.dt

    @property
    def x_nodes(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.dx

    @property
    def t_mid(self) -> np.ndarray:
        return (np.arange(self.nt) + 0.5) * self.dt

    @property
    def x_mid(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    def node(self, i: int, j: int) -> tuple[float, float]:
        return (i * self.dt, j * self.dx)

    def shape(self, layout: str = "node") -> tuple[int, int]:
        if layout == "node":
            return (self.nt + 1, self.nx + 1)
        if layout == "cell":
            return (self.nt, self.nx)
        raise ValueError(f"unknown layout {layout!r}")

    def node_index(self, t: float, x: float, atol: float = 1e-9) -> tuple[int, int]:
        """Return the lattice indices of the node at (t, x); raise if (t, x) is not a node."""
        fi = t / self.dt
        fj = x * self.nx
        i, j = int(round(fi)), int(round(fj))
        if abs(fi - i) > atol * max(1.0, abs(fi)) or abs(fj - j) > atol * max(1.0, abs(fj)):
            raise ValueError(f"({t}, {x}) is not a node of {self}")
        if not (0 <= i <= self.nt and 0 <= j <= self.nx):
            raise ValueError(f"({t}, {x}) lies outside [0, {self.t_max}] x [0, 1]")
        return i, j

    def is_aligned(self, n: int) -> bool:
        """True when every 1/n cell boundary inside the domain is a grid line."""
        return self.nx % n == 0 and _is_integer(self.nt / (n * self.t_max))

    def to_dict(self) -> dict:
        return {"t_max": self.t_max, "nt": self.nt, "nx": self.nx}


def _is_integer(v: float, tol: float = 1e-9) -> bool:
    return abs(v - round(v)) <= tol * max(1.0, abs(v)) and round(v) >= 1


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    layout: str = "node"
    dirichlet: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        self.values = np.asarray(self.values, dtype=float)
        expected = self.grid.shape(self.layout)
        if self.values.shape != expected:
            raise ValueError(
                f"{self.layout} field on {self.grid} needs shape {expected}, got {self.values.shape}"
            )
        if self.dirichlet:
            if self.layout != "node":
                raise ValueError("only node fields can carry Dirichlet boundary columns")
            if np.any(self.values[:, 0] != 0) or np.any(self.values[:, -1] != 0):
                raise ValueError("Dirichlet field has nonzero boundary columns")

    @classmethod
    def zeros(cls, grid: GridSpec, layout: str = "node", **kw) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape(layout)), layout, **kw)

    @classmethod
    def from_function(cls, grid: GridSpec, fn, layout: str = "node", **kw) -> "ScalarField":
        """Evaluate ``fn(t, x)`` (vectorised) on nodes or cell midpoints."""
        if layout == "node":
            tt, xx = np.meshgrid(grid.t_nodes, grid.x_nodes, indexing="ij")
        else:
            tt, xx = np.meshgrid(grid.t_mid, grid.x_mid, indexing="ij")
        vals = np.broadcast_to(np.asarray(fn(tt, xx), dtype=float), tt.shape).copy()
        return cls(grid, vals, layout, **kw)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        if self.layout == "node":
            return self.grid.t_nodes, self.grid.x_nodes
        return self.grid.t_mid, self.grid.x_mid

    def at(self, t: float, x: float) -> float:
        if self.layout != "node":
            raise ValueError("point lookup is defined for node fields only")
        i, j = self.grid.node_index(t, x)
        return float(self.values[i, j])

    def to_cells(self) -> "ScalarField":
        """Cell-midpoint values; node fields are averaged over the four corners."""
        if self.layout == "cell":
            return self
        v = self.values
        cells = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])
        return ScalarField(self.grid, cells, "cell", meta=dict(self.meta))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path=None) -> str:
        """Write ``t,x,value`` rows, row-major by time, in shortest round-trip decimal form."""
        ts, xs = self.coordinates()
        ts_s = [repr(float(t)) for t in ts]
        xs_s = [repr(float(x)) for x in xs]
        buf = io.StringIO()
        buf.write("t,x,value\n")
        for i, row in enumerate(self.values.tolist()):
            ti = ts_s[i]
            buf.write("".join(f"{ti},{xj},{v!r}\n" for xj, v in zip(xs_s, row)))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, grid: GridSpec, layout: str = "node") -> "ScalarField":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(grid, data[:, 2].reshape(grid.shape(layout)), layout)
