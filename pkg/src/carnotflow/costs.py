"""Bounded, Lipschitz terminal costs used as PDE initial data and control costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

BUILTINS = ("constant", "sphere", "cylinder", "plane", "clamped-distance")


@dataclass(frozen=True, eq=False)
class TerminalCost:
    """``g`` with a global bound ``|g| <= bound`` and a Lipschitz constant.

    ``lower`` is a guaranteed lower bound of ``g``; the value estimators
    shift the cost only when it can be negative.
    """

    g: Callable[[np.ndarray], np.ndarray]
    bound: float
    lipschitz: float
    lower: float
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    exact: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __call__(self, x) -> np.ndarray:
        return self.g(np.asarray(x, dtype=float))

    @property
    def shift(self) -> float:
        return self.bound if self.lower < 0 else 0.0

    @property
    def range(self) -> float:
        return self.upper - self.lower

    @property
    def upper(self) -> float:
        return float(self.params.get("upper", self.bound))


def constant(c: float) -> TerminalCost:
    c = float(c)

    def g(x):
        return np.full(np.shape(x)[:-1], c)

    def grad(x):
        return np.zeros(np.shape(x))

    return TerminalCost(g, abs(c), 0.0, c, grad, "constant", {"value": c, "upper": c},
                        exact=lambda tau, x: g(np.asarray(x, dtype=float)))


def _radial(name: str, ncoords: int | None, radius: float, cap: float) -> TerminalCost:
    if not radius > 0 or not cap > 0:
        raise ValueError(f"{name}: radius and cap must be positive")
    r0 = radius * radius

    def sq(x):
        xs = x if ncoords is None else x[..., :ncoords]
        return np.sum(xs * xs, axis=-1)

    def g(x):
        return np.minimum(sq(x) - r0, cap)

    def grad(x):
        out = np.zeros(np.shape(x))
        k = x.shape[-1] if ncoords is None else ncoords
        inside = (sq(x) - r0 < cap)[..., None]
        out[..., :k] = np.where(inside, 2.0 * x[..., :k], 0.0)
        return out

    def exact(tau, x):
        # each level set shrinks by mean curvature: r^2 -> r^2 - 2 (k-1) tau
        x = np.asarray(x, dtype=float)
        k = x.shape[-1] if ncoords is None else ncoords
        return np.minimum(sq(x) - r0 + 2.0 * (k - 1) * tau, cap)

    lip = 2.0 * math.sqrt(r0 + cap)
    params = {"radius": radius, "cap": cap, "upper": cap}
    return TerminalCost(g, max(r0, cap), lip, -r0, grad, name, params, exact)


def sphere(radius: float = 1.0, cap: float = 10.0) -> TerminalCost:
    """``min(|x|^2 - R^2, cap)``."""
    return _radial("sphere", None, radius, cap)


def cylinder(radius: float = 1.0, cap: float = 10.0) -> TerminalCost:
    """``min(x1^2 + x2^2 - R^2, cap)``."""
    return _radial("cylinder", 2, radius, cap)


def plane(axis: int = 2, cap: float = 10.0) -> TerminalCost:
    """``clip(x_axis, -cap, cap)`` (``axis`` is 0-based)."""
    if not cap > 0:
        raise ValueError("plane: cap must be positive")

    def g(x):
        return np.clip(x[..., axis], -cap, cap)

    def grad(x):
        out = np.zeros(np.shape(x))
        out[..., axis] = (np.abs(x[..., axis]) < cap).astype(float)
        return out

    return TerminalCost(g, cap, 1.0, -cap, grad, "plane", {"axis": axis, "cap": cap, "upper": cap},
                        exact=lambda tau, x: g(np.asarray(x, dtype=float)))


def clamped_distance(center, cap: float = 1.0) -> TerminalCost:
    """``min(|x - c|, cap)``."""
    c = np.asarray(center, dtype=float)
    if not cap > 0:
        raise ValueError("clamped-distance: cap must be positive")

    def g(x):
        return np.minimum(np.linalg.norm(x - c, axis=-1), cap)

    def grad(x):
        diff = x - c
        n = np.linalg.norm(diff, axis=-1, keepdims=True)
        ok = (n > 0) & (n < cap)
        return np.where(ok, diff / np.where(n > 0, n, 1.0), 0.0)

    return TerminalCost(g, cap, 1.0, 0.0, grad, "clamped-distance",
                        {"center": c.tolist(), "cap": cap, "upper": cap})


def make_cost(name: str, **params) -> TerminalCost:
    if name == "constant":
        return constant(**params)
    if name == "sphere":
        return sphere(**params)
    if name == "cylinder":
        return cylinder(**params)
    if name == "plane":
        return plane(**params)
    if name == "clamped-distance":
        return clamped_distance(**params)
    raise ValueError(f"unknown cost {name!r}; expected one of {BUILTINS}")
