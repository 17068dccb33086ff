"""Horizontal Brownian motion and controlled Stratonovich dynamics.

Integration is Stratonovich-Heun. Randomness is organized in fixed blocks of
paths, each with its own counter-based stream, so any path's increments are
a pure function of ``(seed, path index)`` and the number of steps, whatever
``K`` or the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .frames import EpsilonFrame, Frame, _PolyFrame
from .levelset_ops import ScalarField

BLOCK = 1024
UNIT_TOL = 1e-12
MODES = ("horizontal-bm", "controlled-sub", "controlled-eps")
FAMILIES = ("constant", "grid-table", "gradient-orthogonal")
CONTROL_SCALE = math.sqrt(2.0)


class PolicyError(ValueError):
    pass


def extremal_control(a) -> np.ndarray:
    """``I - a a^T`` for a unit vector ``a``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise PolicyError("extremal controls need a unit vector")
    return np.eye(a.size) - np.outer(a, a)


def _unit(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    n = np.linalg.norm(a)
    if not n > 0:
        raise PolicyError("direction must be nonzero")
    return a / n


@dataclass(frozen=True, eq=False)
class ControlPolicy:
    """Rule ``(s, Y) -> a`` choosing the extremal control ``I - a a^T``.

    ``rule`` receives a time and an array of states of shape ``(K, N)`` and
    returns unit directions of shape ``(K, d)``. Constant policies carry
    their direction so the integrator can skip per-step evaluation.
    """

    rule: Callable[[float, np.ndarray], np.ndarray]
    id: str
    family: str
    dim: int
    direction: np.ndarray | None = None

    def __call__(self, s: float, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return np.broadcast_to(self.rule(s, y), (y.shape[0], self.dim))

    def control(self, s: float, y) -> np.ndarray:
        """The induced control matrices ``nu``, shape ``(K, d, d)``."""
        a = self(s, y)
        return np.eye(self.dim) - a[:, :, None] * a[:, None, :]


def constant_policy(a, pid: str | None = None) -> ControlPolicy:
    a = _unit(a)
    a.setflags(write=False)
    pid = pid or "const[" + ",".join(f"{v:.6f}" for v in a) + "]"
    return ControlPolicy(lambda s, y: a, pid, "constant", a.size, a)


def gradient_policy(frame: _PolyFrame, gradient: Callable, pid: str = "feedback") -> ControlPolicy:
    """Feedback ``a = F grad g / |F grad g|`` with ``F`` the frame matrix.

    The projection then removes exactly the noise that would move the state
    across level sets of ``g`` to first order. Where the frame gradient
    vanishes the last coordinate direction is used.
    """
    d = frame.nfields
    fallback = np.zeros(d)
    fallback[-1] = 1.0

    def rule(s, y):
        p = np.asarray(gradient(y), dtype=float)
        v = np.einsum("kia,ka->ki", frame.matrix(y), p)
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        ok = n[:, 0] > 1e-12
        out = np.empty_like(v)
        out[ok] = v[ok] / n[ok]
        out[~ok] = fallback
        return out

    return ControlPolicy(rule, pid, "gradient-orthogonal", d)


def grid_table_policy(
    directions,
    bounds,
    time_span: tuple[float, float],
    pid: str = "table",
) -> ControlPolicy:
    """Piecewise-constant lookup: ``directions[time_cell, cell_1, ..., cell_N]``.

    Cells split ``time_span`` and each ``bounds[k]`` uniformly; states outside
    the box use the nearest boundary cell.
    """
    table = np.asarray(directions, dtype=float)
    norms = np.linalg.norm(table, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise PolicyError("table directions must be nonzero")
    table = table / norms
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    cells = np.array(table.shape[1:-1])
    if cells.size != lo.size:
        raise PolicyError("table needs one cell axis per coordinate")
    t0, t1 = time_span
    nt = table.shape[0]

    def rule(s, y):
        it = min(nt - 1, max(0, int((s - t0) / (t1 - t0) * nt)))
        idx = np.floor((y - lo) / (hi - lo) * cells).astype(np.int64)
        idx = np.clip(idx, 0, cells - 1)
        return table[(it,) + tuple(idx.T)]

    return ControlPolicy(rule, pid, "grid-table", table.shape[-1])


# --- random numbers ----------------------------------------------------------


def block_noise(seed: int, block: int, n_steps: int, d: int) -> np.ndarray:
    """Standard normals for paths ``block*BLOCK ..`` in path-major layout."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))
    return rng.standard_normal((BLOCK, n_steps, d))


def path_noise(seed: int, start: int, count: int, n_steps: int, d: int) -> np.ndarray:
    """Normals of shape ``(count, n_steps, d)`` for paths ``start .. start+count``."""
    out = np.empty((count, n_steps, d))
    k = start
    while k < start + count:
        b, off = divmod(k, BLOCK)
        take = min(BLOCK - off, start + count - k)
        out[k - start : k - start + take] = block_noise(seed, b, n_steps, d)[off : off + take]
        k += take
    return out


# --- integrator --------------------------------------------------------------


@dataclass(frozen=True)
class Integrator:
    """Frame structure for the compiled Heun loop."""

    sig_terms: tuple
    nrow: int
    dim: int
    scale: float

    @classmethod
    def build(cls, frame: _PolyFrame, scale: float) -> "Integrator":
        terms = tuple(
            ((i, a), tuple(c.terms))
            for i, vec in enumerate(frame.vector_fields)
            for a, c in enumerate(vec)
            if not c.is_zero
        )
        return cls(terms, frame.nfields, frame.dim, float(scale))

    @property
    def kernel(self):
        return _kernels.heun_kernel(self.dim, self.nrow, dict(self.sig_terms))

    def advance(self, y: np.ndarray, noise: np.ndarray, dt: float, control: np.ndarray | None) -> None:
        """In place over ``noise.shape[1]`` steps with one control per path or one shared."""
        if control is None:
            ctl, per_path = np.zeros((1, self.nrow)), False
        else:
            ctl = np.ascontiguousarray(np.atleast_2d(control), dtype=float)
            per_path = ctl.shape[0] > 1
        self.kernel(y, noise, math.sqrt(dt), self.scale, ctl, per_path)

    def run(
        self,
        x0: np.ndarray,
        noise: np.ndarray,
        s0: float,
        dt: float,
        policy: ControlPolicy | None,
        record_every: int | None = None,
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Terminal states ``(K, N)`` and, if requested, recorded states."""
        K, n_steps, _ = noise.shape
        y = np.tile(np.asarray(x0, dtype=float), (K, 1))
        recs = [y.copy()] if record_every else None
        constant = policy is None or policy.direction is not None
        seg = n_steps if not record_every else record_every
        if not constant:
            seg = 1
        s = 0
        while s < n_steps:
            take = min(seg, n_steps - s)
            chunk = noise[:, s : s + take, :]
            if policy is None:
                ctl = None
            elif constant:
                ctl = policy.direction
            else:
                ctl = policy(s0 + s * dt, y)
            self.advance(y, chunk, dt, ctl)
            s += take
            if record_every and (s % record_every == 0 or s == n_steps):
                recs.append(y.copy())
        return y, (np.stack(recs, axis=1) if recs is not None else None)


def step_count(t: float, T: float, dt: float) -> tuple[int, float]:
    """Number of steps covering ``[t, T]`` and the (possibly shortened) step."""
    span = T - t
    if not span > 0:
        raise ValueError("need t < T")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > span * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the horizon T-t={span}")
    n = max(1, math.ceil(span / dt - 1e-9))
    return n, span / n


@dataclass
class PathEnsemble:
    """``K`` simulated paths; ``paths`` is kept only when recording was requested."""

    origin: tuple[float, np.ndarray]
    horizon: float
    dt: float
    n_steps: int
    terminal: np.ndarray
    seed: int
    policy_id: str
    mode: str
    scale: float
    paths: np.ndarray | None = None
    record_times: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.terminal.shape[0]


def _simulate(
    frame: _PolyFrame,
    mode: str,
    x0,
    t: float,
    T: float,
    dt: float,
    K: int,
    seed: int,
    policy: ControlPolicy | None,
    threads: int,
    record_every: int | None,
) -> PathEnsemble:
    if K < 1:
        raise ValueError("K must be at least 1")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (frame.dim,):
        raise ValueError(f"x0 must have {frame.dim} coordinates")
    n_steps, dt_eff = step_count(t, T, dt)
    scale = 1.0 if mode == "horizontal-bm" else CONTROL_SCALE
    integ = Integrator.build(frame, scale)
    d = frame.nfields
    nblocks = -(-K // BLOCK)

    def one(b):
        count = min(BLOCK, K - b * BLOCK)
        noise = block_noise(seed, b, n_steps, d)[:count]
        return integ.run(x0, noise, t, dt_eff, policy, record_every)

    if threads > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(nblocks)))
    else:
        parts = [one(b) for b in range(nblocks)]
    terminal = np.concatenate([p[0] for p in parts])
    paths = times = None
    if record_every:
        paths = np.concatenate([p[1] for p in parts])
        marks = list(range(0, n_steps + 1, record_every))
        if marks[-1] != n_steps:
            marks.append(n_steps)
        times = t + dt_eff * np.array(marks, dtype=float)
    pid = "horizontal-bm" if policy is None else policy.id
    return PathEnsemble((t, x0.copy()), T, dt_eff, n_steps, terminal, int(seed), pid, mode, scale, paths, times)


def simulate_horizontal_bm(
    frame: _PolyFrame,
    x0,
    T: float,
    dt: float,
    K: int,
    seed: int,
    threads: int = 1,
    record_every: int | None = None,
) -> PathEnsemble:
    """``d xi = sum_i X_i(xi) o dB^i`` from ``x0`` at time 0."""
    return _simulate(frame, "horizontal-bm", x0, 0.0, T, dt, K, seed, None, threads, record_every)


def simulate_controlled(
    frame: _PolyFrame,
    x0,
    t: float,
    T: float,
    dt: float,
    K: int,
    seed: int,
    policy: ControlPolicy,
    mode: str = "controlled-eps",
    threads: int = 1,
    record_every: int | None = None,
) -> PathEnsemble:
    """``d xi = sqrt(2) F(xi)^T o (I - a a^T) dB`` with ``a`` from ``policy``.

    ``F`` is ``sigma_eps`` for ``controlled-eps`` (pass an EpsilonFrame) and
    ``sigma`` for ``controlled-sub`` (pass a Frame).
    """
    if mode == "controlled-eps" and not isinstance(frame, EpsilonFrame):
        raise ValueError("controlled-eps needs an EpsilonFrame")
    if mode == "controlled-sub" and not isinstance(frame, Frame):
        raise ValueError("controlled-sub needs a base Frame")
    if mode not in MODES[1:]:
        raise ValueError(f"unknown mode {mode!r}")
    if policy.dim != frame.nfields:
        raise ValueError(f"policy dimension {policy.dim} does not match {frame.nfields} noise components")
    if not t < T:
        raise ValueError("need t < T")
    return _simulate(frame, mode, x0, t, T, dt, K, seed, policy, threads, record_every)


# --- weak-order diagnostic ---------------------------------------------------


def generator(frame: _PolyFrame, phi: ScalarField, x, a) -> float:
    """``sum_ij (nu^2)_ij X_i X_j phi (x)`` for ``nu = I - a a^T``."""
    x = np.asarray(x, dtype=float)
    nu2 = extremal_control(a)
    p = np.asarray(phi.gradient(0.0, x), dtype=float)
    S = np.asarray(phi.hessian(0.0, x), dtype=float)
    X = frame.matrix(x)
    total = 0.0
    for i in range(frame.nfields):
        for j in range(frame.nfields):
            # X_i (X_j phi) = X_i^T D^2phi X_j + <J_{X_j} X_i, D phi>
            xixj = X[i] @ S @ X[j] + (frame.jacobian(j, x) @ X[i]) @ p
            total += nu2[i, j] * xixj
    return float(total)


@dataclass
class WeakOrderResult:
    dts: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray
    generator: float
    drift_mean: float

    @property
    def orders(self) -> np.ndarray:
        return np.log(self.errors[:-1] / self.errors[1:]) / np.log(self.dts[:-1] / self.dts[1:])


def generator_consistency(
    frame: _PolyFrame,
    phi: ScalarField,
    x,
    a,
    dts,
    K: int,
    seed: int,
    threads: int = 1,
) -> WeakOrderResult:
    """One-step weak error of the controlled scheme against its generator.

    Each sample uses an antithetic pair ``(Z, -Z)`` through the Heun step and
    subtracts the pathwise order-``dt`` Taylor term ``Q(Z)``, whose mean is
    known in closed form. The difference has mean equal to the weak error and
    variance ``O(dt^2)``, so the error is resolved at every ``dt`` with the
    same normals.
    """
    x = np.asarray(x, dtype=float)
    a = _unit(a)
    nu = extremal_control(a)
    d, N = frame.nfields, frame.dim
    integ = Integrator.build(frame, CONTROL_SCALE)
    Z = path_noise(seed, 0, K, 1, d)
    p = np.asarray(phi.gradient(0.0, x), dtype=float)
    S = np.asarray(phi.hessian(0.0, x), dtype=float)
    X = frame.matrix(x)
    J = np.stack([frame.jacobian(i, x) for i in range(d)])
    w = Z[:, 0, :] @ nu
    v = CONTROL_SCALE * w @ X
    dgv = CONTROL_SCALE * np.einsum("ki,iab,kb->ka", w, J, v)
    Q = 0.5 * dgv @ p + 0.5 * np.einsum("ka,ab,kb->k", v, S, v)
    # E[Q] from E[Z Z^T] = I
    drift = 2.0 * np.einsum("ij,iab,jb->a", nu @ nu, J, X)
    EQ = 0.5 * drift @ p + np.trace(nu @ X @ S @ X.T @ nu)
    L = generator(frame, phi, x, a)
    phi0 = float(phi(0.0, x))
    errs, ses = [], []
    for dt in dts:
        ends = []
        for sign in (1.0, -1.0):
            y = np.tile(x, (K, 1))
            chunks = [(s, min(s + BLOCK, K)) for s in range(0, K, BLOCK)]

            def run(span, y=y, sign=sign, dt=dt):
                lo, hi = span
                integ.advance(y[lo:hi], sign * Z[lo:hi], dt, a)

            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(run, chunks))
            else:
                for c in chunks:
                    run(c)
            ends.append(np.asarray(phi(0.0, y), dtype=float))
        D = (0.5 * (ends[0] + ends[1]) - phi0) / dt - Q
        errs.append(abs(float(np.mean(D)) + (EQ - L)))
        ses.append(float(np.std(D, ddof=1) / math.sqrt(K)))
    return WeakOrderResult(np.asarray(dts, dtype=float), np.array(errs), np.array(ses), L, float(EQ))


def smooth_test_function(N: int) -> ScalarField:
    """``phi(x) = sin(w.x) + exp(v.x)/2`` with fixed, non-degenerate ``w, v``."""
    w = np.linspace(0.7, 1.3, N)
    v = np.linspace(-0.4, 0.5, N)

    def value(t, x):
        x = np.asarray(x, dtype=float)
        return np.sin(x @ w) + 0.5 * np.exp(x @ v)

    def gradient(t, x):
        x = np.asarray(x, dtype=float)
        return np.cos(x @ w)[..., None] * w + 0.5 * np.exp(x @ v)[..., None] * v

    def hessian(t, x):
        x = np.asarray(x, dtype=float)
        return -np.sin(x @ w)[..., None, None] * np.outer(w, w) + 0.5 * np.exp(x @ v)[..., None, None] * np.outer(v, v)

    return ScalarField(value, gradient, hessian, "analytic")
