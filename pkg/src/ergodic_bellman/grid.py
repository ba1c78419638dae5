"""Uniform symmetric 1-D grids and node-valued fields."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


class BadGrid(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    radius: float
    n: int

    def __post_init__(self):
        if self.n < 5 or self.n % 2 == 0:
            raise BadGrid(f"need an odd node count >= 5, got {self.n}")
        if self.radius <= 0:
            raise BadGrid("radius must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.radius / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.n)

    @property
    def center_index(self) -> int:
        return self.n // 2


@dataclass
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError("values length must equal the node count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,value\n")
        for x, v in zip(self.grid.nodes, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        return buf.getvalue()


def make_grid(radius: float, n: int) -> Grid:
    return Grid(radius, n)


def grid_for_step(radius: float, h: float) -> Grid:
    """Grid covering [-radius, radius] with spacing as close to h as parity allows."""
    n = int(round(2.0 * radius / h)) + 1
    if n % 2 == 0:
        n += 1
    return Grid(radius, max(n, 5))


def field_from(grid: Grid, fn) -> Field:
    return Field(grid, np.asarray(fn(grid.nodes), dtype=float))


def resample(f: Field, target: Grid, extrapolate: bool = False) -> Field:
    """Piecewise-linear interpolation onto the target nodes.

    Outside the source window the field extends by boundary value plus
    boundary slope (only reached with the extrapolate flag set).
    """
    if target.radius > f.grid.radius + 1e-12 and not extrapolate:
        raise ValueError("target grid exceeds source radius; pass extrapolate=True")
    xs = f.grid.nodes
    vals = np.interp(target.nodes, xs, f.values)
    h = f.grid.h
    xt = target.nodes
    left = xt < xs[0]
    right = xt > xs[-1]
    if np.any(left):
        slope = (f.values[1] - f.values[0]) / h
        vals[left] = f.values[0] + slope * (xt[left] - xs[0])
    if np.any(right):
        slope = (f.values[-1] - f.values[-2]) / h
        vals[right] = f.values[-1] + slope * (xt[right] - xs[-1])
    return Field(target, vals)


def d1(f: Field) -> Field:
    """First derivative: central stencil inside, one-sided second order at the ends."""
    v = f.values
    h = f.grid.h
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return Field(f.grid, out)


def d2(f: Field) -> Field:
    """Second derivative: central stencil inside, one-sided at the ends."""
    v = f.values
    h = f.grid.h
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return Field(f.grid, out)


def submask(grid: Grid, radius: float) -> np.ndarray:
    """Boolean node mask for |x| <= radius (snapped to half a cell)."""
    return np.abs(grid.nodes) <= radius + 0.5 * grid.h
