"""Level-set operators F, F_eps and an explicit scheme for the approximated flow.

The forward equation is ``u_t = Tr(M) - <M n, n>`` with
``M = sigma_eps D^2u sigma_eps^T + A_eps(x, Du)`` and
``n = sigma_eps Du / |sigma_eps Du|``; at nodes where the discrete gradient
vanishes the upper envelope ``Tr(M) - lambda_max(M)`` is used instead.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .frames import EpsilonFrame, Frame, _PolyFrame
from .grid import LevelSetField
from .levelset_ops import CharacteristicPointError, ZeroGradientError, symmetrized_matrix, tol_char
from .linalg import jacobi_eigh

CFL_SAFETY = 0.2


class CFLViolation(ValueError):
    pass


class NonFiniteField(FloatingPointError):
    pass


@dataclass(frozen=True)
class OperatorEval:
    x: np.ndarray
    p: np.ndarray
    S: np.ndarray
    branch: str
    value: float


def _sbar(frame: _PolyFrame, x, p, S):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    return symmetrized_matrix(frame, x, p, S), frame.matrix(x) @ p


def _regular(sbar, g):
    n = g / np.linalg.norm(g)
    return float(-np.trace(sbar) + n @ sbar @ n)


def _envelopes(sbar):
    w, _ = jacobi_eigh(sbar)
    tr = float(np.trace(sbar))
    return -tr + w[-1], -tr + w[0]


def F_hmcf(frame: Frame, x, p, S) -> float:
    sbar, g = _sbar(frame, x, p, S)
    if np.linalg.norm(g) <= tol_char(np.asarray(p, dtype=float)):
        raise CharacteristicPointError("sigma(x) p vanishes: F is undefined there")
    return _regular(sbar, g)


def F_hmcf_envelopes(frame: Frame, x, p, S) -> tuple[float, float]:
    sbar, g = _sbar(frame, x, p, S)
    if np.linalg.norm(g) > tol_char(np.asarray(p, dtype=float)):
        v = _regular(sbar, g)
        return v, v
    return _envelopes(sbar)


def F_eps(eframe: EpsilonFrame, x, p, S) -> float:
    p = np.asarray(p, dtype=float)
    if np.linalg.norm(p) <= tol_char(p):
        raise ZeroGradientError("F_eps needs a nonzero gradient")
    sbar, g = _sbar(eframe, x, p, S)
    return _regular(sbar, g)


def F_eps_envelopes(eframe: EpsilonFrame, x, p, S) -> tuple[float, float]:
    # branch on the Euclidean |p|; sigma_eps is invertible
    p = np.asarray(p, dtype=float)
    sbar, g = _sbar(eframe, x, p, S)
    if np.linalg.norm(p) > tol_char(p):
        v = _regular(sbar, g)
        return v, v
    return _envelopes(sbar)


def evaluate_operator(eframe: EpsilonFrame, x, p, S, side: str = "upper") -> OperatorEval:
    p = np.asarray(p, dtype=float)
    upper, lower = F_eps_envelopes(eframe, x, p, S)
    if np.linalg.norm(p) > tol_char(p):
        branch, value = "regular", upper
    elif side == "upper":
        branch, value = "upper-envelope", upper
    else:
        branch, value = "lower-envelope", lower
    return OperatorEval(np.asarray(x, dtype=float), p, np.asarray(S, dtype=float), branch, value)


# --- explicit scheme ----------------------------------------------------------


@dataclass
class Stencil:
    """Static data for the compiled rate kernel of one frame on one grid.

    The frame and connection polynomials are compiled into the kernel, so
    structurally zero entries cost nothing.
    """

    shape: tuple[int, ...]
    lo: np.ndarray
    h: np.ndarray
    sig_terms: dict
    conn_terms: tuple
    nrow: int
    max_sigma_norm2: float

    @classmethod
    def build(cls, eframe: EpsilonFrame, grid: LevelSetField) -> "Stencil":
        sig_terms = {}
        for i, vec in enumerate(eframe.vector_fields):
            for a, c in enumerate(vec):
                if not c.is_zero:
                    sig_terms[(i, a)] = tuple(c.terms)
        conn_terms = []
        n = eframe.nfields
        for i in range(n):
            for j in range(i, n):
                for k, c in enumerate(eframe.connection_polys[i][j]):
                    if not c.is_zero:
                        conn_terms.append((i, j, k, tuple(c.terms)))
        sig = eframe.matrix(grid.coordinates().reshape(-1, grid.dim))
        norm2 = float(np.max(np.linalg.norm(sig, ord=2, axis=(-2, -1)))) ** 2
        lo = np.array([b[0] for b in grid.bounds])
        return cls(grid.shape, lo, grid.h, sig_terms, tuple(conn_terms), n, norm2)

    @property
    def kernel(self):
        return _kernels.rates_kernel(len(self.shape), self.nrow, self.sig_terms, self.conn_terms)


def cfl_limit(eframe: EpsilonFrame, field: LevelSetField, stencil: Stencil | None = None) -> float:
    """``0.2 h_min^2 / (N max_x |sigma_eps(x)|^2)`` over the grid nodes."""
    stencil = stencil or Stencil.build(eframe, field)
    return CFL_SAFETY * float(np.min(field.h)) ** 2 / (field.dim * stencil.max_sigma_norm2)


def _chunks(total: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, total))
    edges = np.linspace(0, total, workers + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def discrete_rhs(field: LevelSetField, stencil: Stencil, threads: int = 1):
    """Nodewise rates and the (envelope, blended) node counts.

    Ghost nodes repeat the nearest boundary value. Work is split over slabs
    of the first axis; every node's arithmetic is independent of the split.
    """
    u = np.pad(field.values, 1, mode="edge")
    h = np.asarray(stencil.h, dtype=float)
    cp = 1.0 / (2.0 * h)
    cs = 1.0 / (h * h)
    cm = 1.0 / (4.0 * np.outer(h, h))
    rates = np.empty(field.shape)
    flag = np.empty(field.shape, dtype=np.bool_)
    sweep, fixup = stencil.kernel

    def run(span):
        sweep(u, cp, cs, cm, stencil.lo, h, span[0], span[1], rates, flag)

    spans = _chunks(field.shape[0], threads)
    with np.errstate(divide="ignore", invalid="ignore"):
        if len(spans) == 1:
            run(spans[0])
        else:
            with ThreadPoolExecutor(max_workers=len(spans)) as pool:
                list(pool.map(run, spans))
        nodes = np.argwhere(flag)
        n_env = n_blend = 0
        if nodes.size:
            n_env, n_blend = fixup(u, cp, cs, cm, stencil.lo, h, nodes.astype(np.int64), rates)
    return rates, int(n_env), int(n_blend)


@dataclass
class StepInfo:
    step: int
    time: float
    u_min: float
    u_max: float
    envelope_nodes: int
    blended_nodes: int


def step_explicit(
    eframe: EpsilonFrame,
    field: LevelSetField,
    dt: float,
    stencil: Stencil | None = None,
    threads: int = 1,
    time: float | None = None,
) -> tuple[LevelSetField, StepInfo]:
    stencil = stencil or Stencil.build(eframe, field)
    limit = cfl_limit(eframe, field, stencil)
    if dt > limit * (1.0 + 1e-12):
        raise CFLViolation(f"dt={dt:.3e} exceeds the CFL limit {limit:.3e}")
    rates, n_env, n_blend = discrete_rhs(field, stencil, threads)
    new = field.values + dt * rates
    if not np.all(np.isfinite(new)):
        raise NonFiniteField("non-finite values after explicit step")
    t_new = field.time + dt if time is None else time
    info = StepInfo(0, t_new, float(new.min()), float(new.max()), n_env, n_blend)
    return LevelSetField(field.bounds, new, t_new), info


@dataclass
class Trajectory:
    snapshots: list[LevelSetField]
    steps: list[StepInfo] = field(default_factory=list)
    dt: float = 0.0
    cfl_dt: float = 0.0
    n_steps: int = 0

    @property
    def final(self) -> LevelSetField:
        return self.snapshots[-1]

    @property
    def envelope_triggers(self) -> int:
        return sum(s.envelope_nodes for s in self.steps)

    @property
    def blend_triggers(self) -> int:
        return sum(s.blended_nodes for s in self.steps)


def plan_steps(T: float, dt_max: float, snapshot_every: float | None) -> tuple[float, int, int]:
    """Largest ``dt <= dt_max`` that divides the snapshot interval evenly.

    Returns ``(dt, n_steps, steps_per_snapshot)``.
    """
    if T <= 0.0:
        return dt_max, 0, 1
    interval = T if snapshot_every is None else min(snapshot_every, T)
    per = max(1, math.ceil(interval / dt_max - 1e-9))
    dt = interval / per
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"T={T} is not a multiple of the snapshot interval {interval}")
    return dt, n_steps, per


def evolve(
    eframe: EpsilonFrame,
    field: LevelSetField,
    T: float,
    dt: float | None = None,
    snapshot_every: float | None = None,
    threads: int = 1,
    n_steps: int | None = None,
    on_snapshot: Callable[[LevelSetField], None] | None = None,
) -> Trajectory:
    """March ``field`` forward to time ``field.time + T``.

    ``dt=None`` picks the automatic CFL step; ``n_steps`` overrides ``T`` and
    takes exactly that many steps.
    """
    stencil = Stencil.build(eframe, field)
    cfl = cfl_limit(eframe, field, stencil)
    if dt is None:
        dt_max = cfl
    else:
        if dt > cfl * (1.0 + 1e-12):
            raise CFLViolation(f"dt={dt:.3e} exceeds the CFL limit {cfl:.3e}")
        dt_max = dt
    if n_steps is not None:
        dt_use = dt_max
        per = n_steps if snapshot_every is None else max(1, int(round(snapshot_every / dt_use)))
        total = n_steps
    else:
        dt_use, total, per = plan_steps(T, dt_max, snapshot_every)
    t0 = field.time
    snaps = [field]
    if on_snapshot:
        on_snapshot(field)
    traj = Trajectory(snaps, [], dt_use, cfl, total)
    current = field
    for k in range(1, total + 1):
        current, info = step_explicit(eframe, current, dt_use, stencil, threads, time=t0 + k * dt_use)
        info.step = k
        traj.steps.append(info)
        if k % per == 0 or k == total:
            snaps.append(current)
            if on_snapshot:
                on_snapshot(current)
    return traj
