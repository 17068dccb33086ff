"""Zero-level-set extraction on grid fields by linear interpolation along axes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import LevelSetField


ZERO_TOL = 1e-9


def zero_crossings(field: LevelSetField, axes=None) -> np.ndarray:
    """Points where ``u`` changes sign between neighbouring nodes along ``axes``.

    A node counts as inside when ``u < -delta`` with ``delta`` a relative
    round-off allowance, so a set that has collapsed to a single node is
    reported empty. Each inside/outside pair of neighbours contributes the
    linear-interpolation root. Returns ``(n, N)``.
    """
    delta = ZERO_TOL * max(1.0, float(np.max(np.abs(field.values))))
    u = field.values + delta
    coords = field.coordinates()
    axes = range(field.dim) if axes is None else axes
    out = []
    for k in axes:
        a = [slice(None)] * field.dim
        b = [slice(None)] * field.dim
        a[k] = slice(None, -1)
        b[k] = slice(1, None)
        ua, ub = u[tuple(a)], u[tuple(b)]
        mask = (ua < 0) != (ub < 0)
        if not np.any(mask):
            continue
        fa, fb = ua[mask], ub[mask]
        lam = fa / (fa - fb)
        xa = coords[tuple(a)][mask]
        xb = coords[tuple(b)][mask]
        out.append(xa + lam[:, None] * (xb - xa))
    if not out:
        return np.empty((0, field.dim))
    return np.concatenate(out)


def _rays(d: int, n: int) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rho = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    pts = [rho * np.cos(phi), rho * np.sin(phi), z]
    if d > 3:
        raise ValueError("radius extraction supports at most three radial coordinates")
    return np.stack(pts, axis=1)


@dataclass(frozen=True)
class RadiusSample:
    time: float
    radius: float
    spread: float
    rays: int
    crossings: int

    @property
    def empty(self) -> bool:
        return self.crossings == 0


def zero_set_radius(field: LevelSetField, radial_axes=None, n_rays: int | None = None) -> RadiusSample:
    """Mean radius of the zero set about the origin in the ``radial_axes`` coordinates.

    Crossings are found along the radial axes only; each is assigned to the
    nearest of ``n_rays`` fixed directions, radii are averaged per ray and
    then across rays, so dense regions of crossings do not dominate.
    ``radius`` is NaN when the zero set is empty.
    """
    radial_axes = list(range(field.dim)) if radial_axes is None else list(radial_axes)
    d = len(radial_axes)
    n_rays = n_rays or (64 if d == 2 else 128)
    pts = zero_crossings(field, radial_axes)
    if pts.shape[0] == 0:
        return RadiusSample(field.time, math.nan, math.nan, 0, 0)
    sub = pts[:, radial_axes]
    r = np.linalg.norm(sub, axis=1)
    keep = r > 0
    sub, r = sub[keep], r[keep]
    if r.size == 0:
        return RadiusSample(field.time, 0.0, 0.0, 0, int(pts.shape[0]))
    rays = _rays(d, n_rays)
    owner = np.argmax((sub / r[:, None]) @ rays.T, axis=1)
    sums = np.bincount(owner, weights=r, minlength=rays.shape[0])
    counts = np.bincount(owner, minlength=rays.shape[0])
    hit = counts > 0
    per_ray = sums[hit] / counts[hit]
    return RadiusSample(field.time, float(per_ray.mean()), float(per_ray.std()), int(hit.sum()), int(pts.shape[0]))


def radial_axes_for(cost_name: str, dim: int):
    """Coordinates in which a built-in cost is radially symmetric, or None."""
    if cost_name == "sphere":
        return list(range(dim))
    if cost_name == "cylinder":
        return [0, 1]
    return None
