"""Uniform Cartesian grids carrying level-set values."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass
class LevelSetField:
    """Values of ``u(time, .)`` on a uniform tensor grid.

    ``bounds[k] = (lo, hi)`` and ``values.shape[k]`` is the node count on
    axis ``k``; nodes include both endpoints.
    """

    bounds: tuple[tuple[float, float], ...]
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != len(self.bounds):
            raise ValueError("values must have one axis per bound")
        for (lo, hi), n in zip(self.bounds, self.values.shape):
            if not hi > lo:
                raise ValueError(f"bad bounds ({lo}, {hi})")
            if n < 3:
                raise ValueError("need at least 3 nodes per axis for the stencil")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("level-set values must be finite")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def h(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.shape)])

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.shape)]

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (N,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def replace(self, values: np.ndarray, time: float) -> "LevelSetField":
        return LevelSetField(self.bounds, values, time)

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation at ``points`` of shape ``(..., N)``."""
        from scipy.interpolate import RegularGridInterpolator

        pts = np.asarray(points, dtype=float)
        interp = RegularGridInterpolator(self.axes(), self.values, method="linear", bounds_error=True)
        return interp(pts.reshape(-1, self.dim)).reshape(pts.shape[:-1])

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.all((pts >= lo) & (pts <= hi), axis=-1)


def sample(bounds: Sequence[Sequence[float]], nodes: Sequence[int], func: Callable, time: float = 0.0) -> LevelSetField:
    """Evaluate ``func(x)`` (``x`` of shape ``(..., N)``) on a fresh grid."""
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, nodes)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return LevelSetField(tuple(tuple(b) for b in bounds), np.asarray(func(coords), dtype=float), time)


def _first(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central first difference, second-order one-sided at the two ends."""
    u = np.moveaxis(values, axis, 0)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    if u.shape[0] >= 3:
        d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
        d[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return np.moveaxis(d, 0, axis)


def _second(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    u = np.moveaxis(values, axis, 0)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (h * h)
    if u.shape[0] >= 4:
        d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (h * h)
        d[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / (h * h)
    else:
        d[0] = d[1]
        d[-1] = d[-2]
    return np.moveaxis(d, 0, axis)


def grid_derivatives(values: np.ndarray, h: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Gradient ``(..., N)`` and Hessian ``(..., N, N)`` by finite differences.

    Interior nodes use the same compact central stencil as the time
    stepper; boundary nodes use second-order one-sided formulas.
    """
    n = values.ndim
    grad = np.stack([_first(values, h[k], k) for k in range(n)], axis=-1)
    hess = np.empty(values.shape + (n, n))
    for k in range(n):
        hess[..., k, k] = _second(values, h[k], k)
        dk = grad[..., k]
        for l in range(k + 1, n):
            mixed = _first(dk, h[l], l)
            hess[..., k, l] = mixed
            hess[..., l, k] = mixed
    return grad, hess
