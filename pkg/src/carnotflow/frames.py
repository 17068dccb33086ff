"""Carnot-type vector-field frames on R^N and their Riemannian approximation.

A frame is ``m`` polynomial vector fields ``X_1..X_m`` on ``R^N``. The
matrix ``sigma(x)`` stacks them as rows (``m x N``); the epsilon frame
appends ``epsilon * e_k`` for ``k = m+1..N`` which gives the invertible
``N x N`` matrix ``sigma_eps(x)``.

Indices in this module are 0-based: field ``i`` is ``X_{i+1}``.

Covariant derivatives use the flat connection of R^N,
``nabla_X Y (x) = J_Y(x) X(x)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .polynomial import Polynomial, polynomial_vector

PolyVector = tuple[Polynomial, ...]

KINDS = ("heisenberg1", "euclidean", "custom-polynomial")


class FrameError(ValueError):
    pass


def _eval_vector(vec: PolyVector, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([c(x) for c in vec], axis=-1)


def _jacobian_polys(vec: PolyVector) -> tuple[PolyVector, ...]:
    n = len(vec)
    return tuple(tuple(vec[a].derivative(b) for b in range(n)) for a in range(n))


def _apply(jac: tuple[PolyVector, ...], vec: PolyVector) -> PolyVector:
    """Polynomial matrix-vector product ``J @ v``."""
    n = len(vec)
    out = []
    for a in range(n):
        acc = Polynomial.zero(n)
        for b in range(n):
            if not jac[a][b].is_zero and not vec[b].is_zero:
                acc = acc + jac[a][b] * vec[b]
        out.append(acc)
    return tuple(out)


def bracket_vector(x_vec: PolyVector, y_vec: PolyVector) -> PolyVector:
    """Coordinate Lie bracket ``[X, Y] = J_Y X - J_X Y``."""
    jy = _apply(_jacobian_polys(y_vec), x_vec)
    jx = _apply(_jacobian_polys(x_vec), y_vec)
    return tuple(a - b for a, b in zip(jy, jx))


class _PolyFrame:
    """Shared evaluation machinery; subclasses provide ``vector_fields``."""

    vector_fields: tuple[PolyVector, ...]
    dim: int

    @property
    def nfields(self) -> int:
        return len(self.vector_fields)

    @cached_property
    def _jacobians(self) -> tuple[tuple[PolyVector, ...], ...]:
        return tuple(_jacobian_polys(v) for v in self.vector_fields)

    @cached_property
    def connection_polys(self) -> tuple[tuple[PolyVector, ...], ...]:
        """``C[i][j] = (nabla_{X_i} X_j + nabla_{X_j} X_i) / 2`` as polynomial vectors."""
        n = self.nfields
        nab = [[_apply(self._jacobians[j], self.vector_fields[i]) for j in range(n)] for i in range(n)]
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                row.append(tuple((a + b) * 0.5 for a, b in zip(nab[i][j], nab[j][i])))
            out.append(tuple(row))
        return tuple(out)

    @cached_property
    def has_connection_terms(self) -> bool:
        return any(not c.is_zero for row in self.connection_polys for vec in row for c in vec)

    def field(self, i: int, x) -> np.ndarray:
        return _eval_vector(self.vector_fields[i], x)

    def jacobian(self, i: int, x) -> np.ndarray:
        """``J[..., a, b] = d X_i^a / d x_b`` at ``x`` of shape ``(..., N)``."""
        x = np.asarray(x, dtype=float)
        jac = self._jacobians[i]
        return np.stack([np.stack([jac[a][b](x) for b in range(self.dim)], axis=-1) for a in range(self.dim)], axis=-2)

    @property
    def fields(self) -> list[Callable]:
        return [lambda x, i=i: self.field(i, x) for i in range(self.nfields)]

    @property
    def jacobians(self) -> list[Callable]:
        return [lambda x, i=i: self.jacobian(i, x) for i in range(self.nfields)]

    def matrix(self, x) -> np.ndarray:
        """Rows are the frame fields evaluated at ``x``; shape ``(..., n, N)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([self.field(i, x) for i in range(self.nfields)], axis=-2)

    def connection_matrix(self, x, p) -> np.ndarray:
        """Symmetric ``A(x, p)_ij = <(nabla_{X_i}X_j + nabla_{X_j}X_i)/2, p>``."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        n = self.nfields
        shape = np.broadcast_shapes(x.shape[:-1], p.shape[:-1])
        out = np.zeros(shape + (n, n))
        if not self.has_connection_terms:
            return out
        for i in range(n):
            for j in range(i, n):
                vec = self.connection_polys[i][j]
                val = np.zeros(shape)
                for k, c in enumerate(vec):
                    if not c.is_zero:
                        val = val + c(x) * p[..., k]
                out[..., i, j] = val
                out[..., j, i] = val
        return out


@dataclass(frozen=True, eq=False)
class Frame(_PolyFrame):
    """``m`` polynomial vector fields on ``R^N``."""

    dim: int
    vector_fields: tuple[PolyVector, ...]
    kind: str = "custom-polynomial"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FrameError(f"unknown frame kind {self.kind!r}")
        if not 1 <= len(self.vector_fields) <= self.dim:
            raise FrameError(f"need 1 <= m <= N, got m={len(self.vector_fields)}, N={self.dim}")
        for v in self.vector_fields:
            if len(v) != self.dim or any(c.nvars != self.dim for c in v):
                raise FrameError("every field needs N polynomial components in N variables")

    @property
    def rank(self) -> int:
        return len(self.vector_fields)

    def sigma(self, x) -> np.ndarray:
        return self.matrix(x)

    def carnot_violations(self) -> list[str]:
        """Human-readable list of departures from the Carnot-type structure."""
        m = self.rank
        problems = []
        for i, vec in enumerate(self.vector_fields):
            for j in range(m):
                want = 1.0 if i == j else 0.0
                c = vec[j]
                if not (c.is_constant and (c.terms[0][1] if c.terms else 0.0) == want):
                    problems.append(f"X{i + 1} component {j + 1} is {c!r}, expected {want:g}")
            for j in range(m, self.dim):
                extra = {k for k in vec[j].variables() if k >= m}
                if extra:
                    problems.append(
                        f"X{i + 1} component {j + 1} depends on x{sorted(k + 1 for k in extra)}"
                    )
        return problems


@dataclass(frozen=True, eq=False)
class EpsilonFrame(_PolyFrame):
    """Riemannian approximation: the base frame completed by ``epsilon * e_k``."""

    base: Frame
    epsilon: float

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise FrameError(f"epsilon must lie in (0, 1], got {self.epsilon}")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.base.dim

    @property
    def rank(self) -> int:
        return self.base.rank

    @property
    def kind(self) -> str:
        return self.base.kind

    @cached_property
    def vector_fields(self) -> tuple[PolyVector, ...]:  # type: ignore[override]
        n = self.dim
        extra = []
        for k in range(self.rank, n):
            comps = [0.0] * n
            comps[k] = self.epsilon
            extra.append(polynomial_vector(n, comps))
        return self.base.vector_fields + tuple(extra)

    def sigma(self, x) -> np.ndarray:
        return self.matrix(x)

    def with_epsilon(self, epsilon: float) -> "EpsilonFrame":
        return EpsilonFrame(self.base, epsilon)


# --- constructors -----------------------------------------------------------


def heisenberg1() -> Frame:
    n = 3
    x1 = Polynomial.variable(n, 0)
    x2 = Polynomial.variable(n, 1)
    X1 = polynomial_vector(n, [1.0, 0.0, x2 * -0.5])
    X2 = polynomial_vector(n, [0.0, 1.0, x1 * 0.5])
    return Frame(n, (X1, X2), "heisenberg1")


def euclidean(dim: int) -> Frame:
    if dim < 1:
        raise FrameError("euclidean frame needs dim >= 1")
    fields = []
    for i in range(dim):
        comps = [0.0] * dim
        comps[i] = 1.0
        fields.append(polynomial_vector(dim, comps))
    return Frame(dim, tuple(fields), "euclidean")


def custom(dim: int, table: Sequence[Sequence[Sequence]]) -> Frame:
    """Build a frame from a polynomial coefficient table.

    ``table[i][a]`` is the list of ``(exponents, coefficient)`` terms of
    component ``a`` of field ``i``. Departures from the Carnot-type shape
    are reported with a warning, not rejected.
    """
    fields = []
    for i, comps in enumerate(table):
        if len(comps) != dim:
            raise FrameError(f"field {i + 1} has {len(comps)} components, expected {dim}")
        vec = []
        for terms in comps:
            acc: dict[tuple[int, ...], float] = {}
            for exps, coef in terms:
                key = tuple(int(e) for e in exps)
                acc[key] = acc.get(key, 0.0) + float(coef)
            vec.append(Polynomial.from_dict(dim, acc))
        fields.append(tuple(vec))
    frame = Frame(dim, tuple(fields), "custom-polynomial")
    problems = frame.carnot_violations()
    if problems:
        warnings.warn("frame is not Carnot-type: " + "; ".join(problems), stacklevel=2)
    return frame


# --- operations ---------------------------------------------------------------


def sigma(frame: Frame, x) -> np.ndarray:
    return frame.sigma(x)


def sigma_eps(eframe: EpsilonFrame, x) -> np.ndarray:
    return eframe.sigma(x)


def lie_bracket(frame: _PolyFrame, i: int, j: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    jxi = np.einsum("...ab,...b->...a", frame.jacobian(j, x), frame.field(i, x))
    jxj = np.einsum("...ab,...b->...a", frame.jacobian(i, x), frame.field(j, x))
    return jxi - jxj


def hormander_check(frame: _PolyFrame, x, max_step: int) -> int | None:
    """First bracket step at which the fields span R^N at ``x``, else ``None``."""
    if max_step < 1:
        raise ValueError("max_step must be >= 1")
    x = np.asarray(x, dtype=float)
    n = frame.dim
    base = list(frame.vector_fields)
    vectors = [_eval_vector(v, x) for v in base]
    if np.linalg.matrix_rank(np.array(vectors)) == n:
        return 1
    current = base
    for step in range(2, max_step + 1):
        nxt = []
        for xi in base:
            for y in current:
                b = bracket_vector(xi, y)
                if not all(c.is_zero for c in b):
                    nxt.append(b)
        if not nxt:
            return None
        vectors.extend(_eval_vector(v, x) for v in nxt)
        if np.linalg.matrix_rank(np.array(vectors)) == n:
            return step
        current = nxt
    return None


def covariant_matrix(frame: _PolyFrame, x, p) -> np.ndarray:
    return frame.connection_matrix(x, p)


def covariant_matrix_eps(eframe: EpsilonFrame, x, p) -> np.ndarray:
    return eframe.connection_matrix(x, p)


def make_frame(kind: str, dim: int | None = None, table=None) -> Frame:
    if kind == "heisenberg1":
        if dim not in (None, 3):
            raise FrameError("heisenberg1 is 3-dimensional")
        return heisenberg1()
    if kind == "euclidean":
        if dim is None:
            raise FrameError("euclidean frame needs dim")
        return euclidean(dim)
    if kind in ("custom", "custom-polynomial"):
        if dim is None or table is None:
            raise FrameError("custom frame needs dim and a polynomial table")
        return custom(dim, table)
    raise FrameError(f"unknown frame {kind!r}")
