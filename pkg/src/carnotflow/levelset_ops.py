"""Horizontal and approximated differential quantities of level-set functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frames import EpsilonFrame, Frame, _PolyFrame
from .grid import LevelSetField, grid_derivatives

CHAR_TOL = 1e-10


class CharacteristicPointError(ValueError):
    """The horizontal gradient vanishes: the horizontal normal is undefined."""


class ZeroGradientError(ValueError):
    """The Euclidean gradient vanishes."""


def tol_char(p) -> np.ndarray:
    """Relative tolerance used to declare a gradient zero; scale-invariant in ``u``."""
    return CHAR_TOL * (1.0 + np.linalg.norm(p, axis=-1))


@dataclass(frozen=True)
class ScalarField:
    """A level-set function with its first and second derivatives.

    The callables take ``(t, x)`` with ``x`` of shape ``(..., N)`` and return
    arrays of shape ``(...)``, ``(..., N)`` and ``(..., N, N)``.
    """

    evaluation: Callable
    gradient: Callable
    hessian: Callable
    source: str = "analytic"

    def __call__(self, t, x):
        return self.evaluation(t, x)

    @classmethod
    def from_grid(cls, field: LevelSetField) -> "ScalarField":
        """Grid-sampled field: finite differences on nodes, multilinear between."""
        from scipy.interpolate import RegularGridInterpolator

        grad, hess = grid_derivatives(field.values, field.h)
        axes = field.axes()
        n = field.dim
        u_i = RegularGridInterpolator(axes, field.values)
        g_i = RegularGridInterpolator(axes, grad)
        h_i = RegularGridInterpolator(axes, hess.reshape(field.shape + (n * n,)))

        def _at(interp, x, tail):
            x = np.asarray(x, dtype=float)
            out = interp(x.reshape(-1, n))
            return out.reshape(x.shape[:-1] + tail)

        def hessian(t, x):
            out = _at(h_i, x, (n, n))
            return 0.5 * (out + np.swapaxes(out, -1, -2))

        return cls(
            lambda t, x: _at(u_i, x, ()),
            lambda t, x: _at(g_i, x, (n,)),
            hessian,
            "grid-sampled",
        )


@dataclass(frozen=True)
class HorizontalJet:
    hgrad: np.ndarray
    hhess: np.ndarray
    characteristic: bool


def _jet(field: ScalarField, t, x):
    x = np.asarray(x, dtype=float)
    return np.asarray(field.gradient(t, x), dtype=float), np.asarray(field.hessian(t, x), dtype=float)


def symmetrized_matrix(frame: _PolyFrame, x, p, S) -> np.ndarray:
    """``sigma S sigma^T + A(x, p)``: the symmetrized second derivatives along the frame."""
    sig = frame.matrix(x)
    out = np.einsum("...ia,...ab,...jb->...ij", sig, np.asarray(S, dtype=float), sig)
    out = out + frame.connection_matrix(x, p)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def horizontal_gradient(frame: _PolyFrame, field: ScalarField, t, x) -> np.ndarray:
    p, _ = _jet(field, t, x)
    return np.einsum("...ia,...a->...i", frame.matrix(x), p)


def approx_gradient(eframe: EpsilonFrame, field: ScalarField, t, x) -> np.ndarray:
    return horizontal_gradient(eframe, field, t, x)


def sym_horizontal_hessian(frame: _PolyFrame, field: ScalarField, t, x) -> np.ndarray:
    """Entry ``(i, j)`` is ``(X_i(X_j u) + X_j(X_i u)) / 2``.

    Works for a base frame (``m x m``) or an epsilon frame (``N x N``).
    """
    p, S = _jet(field, t, x)
    return symmetrized_matrix(frame, x, p, S)


def horizontal_jet(frame: _PolyFrame, field: ScalarField, t, x) -> HorizontalJet:
    p, S = _jet(field, t, x)
    g = np.einsum("...ia,...a->...i", frame.matrix(x), p)
    char = np.linalg.norm(g, axis=-1) < tol_char(p)
    return HorizontalJet(g, symmetrized_matrix(frame, x, p, S), bool(np.all(char)) if char.ndim == 0 else char)


def _normalize(g, p, error, what):
    norm = np.linalg.norm(g, axis=-1)
    bad = norm < tol_char(p)
    if np.any(bad):
        raise error(f"{what} vanishes at {np.count_nonzero(bad)} point(s)")
    return g / norm[..., None]


def horizontal_normal(frame: Frame, field: ScalarField, t, x) -> np.ndarray:
    p, _ = _jet(field, t, x)
    g = np.einsum("...ia,...a->...i", frame.matrix(x), p)
    return _normalize(g, p, CharacteristicPointError, "horizontal gradient")


def approx_normal(eframe: EpsilonFrame, field: ScalarField, t, x) -> np.ndarray:
    p, _ = _jet(field, t, x)
    if np.any(np.linalg.norm(p, axis=-1) < tol_char(p)):
        raise ZeroGradientError("Euclidean gradient vanishes")
    g = np.einsum("...ia,...a->...i", eframe.matrix(x), p)
    return _normalize(g, p, ZeroGradientError, "approximated gradient")


def _divergence_of_normal(frame, field, t, x, error, what):
    # sum_i X_i(g_i / |g|) = (Tr M - <M n, n>) / |g|, M the symmetrized frame Hessian
    p, S = _jet(field, t, x)
    g = np.einsum("...ia,...a->...i", frame.matrix(x), p)
    n = _normalize(g, p, error, what)
    M = symmetrized_matrix(frame, x, p, S)
    tr = np.trace(M, axis1=-2, axis2=-1)
    quad = np.einsum("...i,...ij,...j->...", n, M, n)
    return (tr - quad) / np.linalg.norm(g, axis=-1)


def approx_curvature(eframe: EpsilonFrame, field: ScalarField, t, x) -> np.ndarray:
    """Divergence of the approximated normal along ``X_1..X_m, eps e_{m+1}..eps e_N``."""
    p, _ = _jet(field, t, x)
    if np.any(np.linalg.norm(p, axis=-1) < tol_char(p)):
        raise ZeroGradientError("Euclidean gradient vanishes")
    return _divergence_of_normal(eframe, field, t, x, ZeroGradientError, "approximated gradient")


def horizontal_curvature(frame: Frame, field: ScalarField, t, x) -> np.ndarray:
    return _divergence_of_normal(frame, field, t, x, CharacteristicPointError, "horizontal gradient")


def polynomial_field(poly_value, nvars: int) -> ScalarField:
    """Time-independent analytic field from a :class:`Polynomial`."""
    grads = [poly_value.derivative(k) for k in range(nvars)]
    hess = [[g.derivative(l) for l in range(nvars)] for g in grads]

    def gradient(t, x):
        return np.stack([g(x) for g in grads], axis=-1)

    def hessian(t, x):
        return np.stack([np.stack([h(x) for h in row], axis=-1) for row in hess], axis=-2)

    return ScalarField(lambda t, x: poly_value(x), gradient, hessian, "analytic")
