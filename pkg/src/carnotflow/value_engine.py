"""Monte Carlo value functions over extremal-control policy families, and Hamiltonians.

Policies are compared on common random numbers: every policy sees the same
normals for path ``k``. The infimum over a family is an ordered scan with
exact pruning, so the result does not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .costs import TerminalCost
from .frames import EpsilonFrame, Frame, _PolyFrame
from .linalg import jacobi_eigh
from .sde_engine import (
    BLOCK,
    CONTROL_SCALE,
    ControlPolicy,
    Integrator,
    block_noise,
    constant_policy,
    gradient_policy,
    step_count,
)

INF = math.inf
DEFAULT_DIRECTIONS = {2: 256, 3: 720}
NOISE_CACHE_LIMIT = 3 * 10**7


class EigenGapError(ValueError):
    pass


# --- direction grids ---------------------------------------------------------


def _radical_inverse(i: int) -> float:
    out, f = 0.0, 0.5
    while i:
        if i & 1:
            out += f
        i >>= 1
        f *= 0.5
    return out


def _fold(v: np.ndarray) -> np.ndarray:
    # a and -a give the same control; keep the first nonzero coordinate positive
    idx = np.argmax(np.abs(v) > 1e-15, axis=1)
    sign = np.sign(v[np.arange(v.shape[0]), idx])
    return v * sign[:, None]


def direction_grid(d: int, n: int | None = None) -> np.ndarray:
    """``n`` unit directions covering the sphere in ``R^d`` up to sign.

    Circle: equally spaced angles on a half turn. Two-sphere: Fibonacci
    lattice on the upper hemisphere. Higher ``d``: Halton points mapped to
    the sphere through the normal quantile. Rows are ordered so that every
    prefix is itself spread out (bit-reversed index order), which makes
    budget prefixes nested.
    """
    if d < 1:
        raise ValueError("d must be positive")
    n = n or DEFAULT_DIRECTIONS.get(d, 1024)
    if d == 1:
        return np.ones((1, 1))
    i = np.arange(n)
    if d == 2:
        th = np.pi * (i + 0.5) / n
        pts = np.stack([np.cos(th), np.sin(th)], axis=1)
    elif d == 3:
        z = 1.0 - (i + 0.5) / n
        rho = np.sqrt(1.0 - z * z)
        phi = i * math.pi * (3.0 - math.sqrt(5.0))
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    else:
        from scipy.stats import norm, qmc

        u = qmc.Halton(d, scramble=False).random(n + 1)[1:]
        g = norm.ppf(u)
        pts = _fold(g / np.linalg.norm(g, axis=1, keepdims=True))
    order = sorted(range(n), key=lambda k: (_radical_inverse(k), k))
    return pts[order]


def _tangent_basis(a: np.ndarray) -> np.ndarray:
    # rows orthonormal and orthogonal to a
    q, _ = np.linalg.qr(np.column_stack([a, np.eye(a.size)]))
    return q[:, 1:].T


def sup_on_sphere(fun: Callable[[np.ndarray], np.ndarray], d: int, n: int | None = None, refine: int = 3):
    """Brute-force ``sup_{|a|=1} fun(a)`` on a direction grid, then local zooms.

    ``fun`` maps ``(n, d)`` directions to ``(n,)`` values. Each refinement
    round evaluates a tangent-plane patch around the incumbent and shrinks
    the patch. ``refine=0`` is the plain grid maximum.
    """
    grid = direction_grid(d, n)
    vals = fun(grid)
    k = int(np.argmax(vals))
    best, val = grid[k], float(vals[k])
    if d == 1:
        return val, best
    width = math.sqrt(2.0 * math.pi / grid.shape[0]) if d == 3 else math.pi / grid.shape[0]
    if d > 3:
        width = grid.shape[0] ** (-1.0 / (d - 1))
    per_axis = 9 if d <= 4 else 5
    offs = np.linspace(-1.0, 1.0, per_axis)
    mesh = np.stack(np.meshgrid(*([offs] * (d - 1)), indexing="ij"), axis=-1).reshape(-1, d - 1)
    for _ in range(refine):
        basis = _tangent_basis(best)
        cand = best + width * mesh @ basis
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        cv = fun(cand)
        j = int(np.argmax(cv))
        if cv[j] > val:
            best, val = cand[j], float(cv[j])
        width *= 2.0 / (per_axis - 1)
    return val, best


# --- Hamiltonians ------------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianValue:
    value: float
    direction: np.ndarray


def _quadratic(B: np.ndarray, c: float):
    return lambda a: c + np.einsum("ki,ij,kj->k", a, B, a)


def _frame_hamiltonian(frame: _PolyFrame, x, p, S, resolution, refine) -> HamiltonianValue:
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    X = frame.matrix(x)
    B = X @ np.asarray(S, dtype=float) @ X.T
    A = frame.connection_matrix(x, p)
    # -Tr(B nu^2) + sum_ij (nu^2)_ij A_ij with nu^2 = I - a a^T
    C = 0.5 * ((B - A) + (B - A).T)
    val, a = sup_on_sphere(_quadratic(C, -float(np.trace(C))), frame.nfields, resolution, refine)
    return HamiltonianValue(val, a)


def hamiltonian_H_eps(eframe: EpsilonFrame, x, p, S, resolution: int | None = None, refine: int = 3) -> HamiltonianValue:
    """Brute-force sup over extremal ``nu_1^2 = I - a a^T`` in ``R^N``."""
    return _frame_hamiltonian(eframe, x, p, S, resolution, refine)


def hamiltonian_H(frame: Frame, x, p, S, resolution: int | None = None, refine: int = 3) -> HamiltonianValue:
    """Same evaluator over horizontal controls in ``R^m``."""
    return _frame_hamiltonian(frame, x, p, S, resolution, refine)


def hamiltonian_Hp(z: float, q, M, p_exponent: float, resolution: int | None = None, refine: int = 3) -> HamiltonianValue:
    """``sup_a [-(p-1)/z Tr(nu^2 q q^T) + Tr(nu^2 M)]`` over ``nu^2 = I - a a^T``."""
    if not z > 0:
        raise ValueError("z must be positive")
    if not p_exponent > 1:
        raise ValueError("the exponent must exceed 1")
    q = np.asarray(q, dtype=float)
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    c = (p_exponent - 1.0) / z
    B = c * np.outer(q, q) - M
    const = -c * float(q @ q) + float(np.trace(M))
    val, a = sup_on_sphere(_quadratic(B, const), q.size, resolution, refine)
    return HamiltonianValue(val, a)


def eps_scaling(m: int, N: int, epsilon: float) -> np.ndarray:
    return np.concatenate([np.ones(m), np.full(N - m, float(epsilon))])


def hamiltonian_Hp_eps(
    z: float, q, M, p_exponent: float, m: int, epsilon: float, resolution: int | None = None, refine: int = 3
) -> HamiltonianValue:
    """``hamiltonian_Hp`` at ``q_eps = D q`` and ``M_eps = D M D``, ``D = diag(1_m, eps 1_{N-m})``."""
    q = np.asarray(q, dtype=float)
    D = eps_scaling(m, q.size, epsilon)
    M = np.asarray(M, dtype=float)
    return hamiltonian_Hp(z, D * q, D[:, None] * M * D[None, :], p_exponent, resolution, refine)


def lambda_max_derivative_check(S, H, a=None, delta: float = 1e-5, min_gap: float = 1e-6) -> tuple[float, float]:
    """Central difference of ``lambda_max`` along ``H`` and ``<H a, a>``."""
    S = np.asarray(S, dtype=float)
    H = np.asarray(H, dtype=float)
    w, v = jacobi_eigh(S)
    if w.size > 1 and w[-1] - w[-2] <= min_gap:
        raise EigenGapError(f"top eigenvalue gap {w[-1] - w[-2]:.3e} is too small")
    if a is None:
        a = v[:, -1]
    a = np.asarray(a, dtype=float)
    a = a / np.linalg.norm(a)
    fd = (jacobi_eigh(S + delta * H)[0][-1] - jacobi_eigh(S - delta * H)[0][-1]) / (2.0 * delta)
    return float(fd), float(a @ H @ a)


# --- value estimation --------------------------------------------------------


@dataclass
class ValueEstimate:
    t: float
    x: np.ndarray
    exponent: float
    estimate: float
    stderr: float
    policy_id: str
    K: int
    seed: int
    shift: float = 0.0


@dataclass
class PolicyFamily:
    """An ordered list of policies; a budget ``B`` means the first ``B``."""

    name: str
    policies: list[ControlPolicy]

    def head(self, budget: int | None) -> list[ControlPolicy]:
        if budget is None:
            return list(self.policies)
        if budget < 1:
            raise ValueError("the search budget must be at least one policy")
        return self.policies[:budget]


def constant_family(d: int, n: int | None = None) -> PolicyFamily:
    dirs = direction_grid(d, n)
    return PolicyFamily("constant", [constant_policy(a, f"dir{k:04d}") for k, a in enumerate(dirs)])


def feedback_family(frame: _PolyFrame, cost: TerminalCost, n_directions: int | None = None) -> PolicyFamily:
    """The gradient-orthogonal feedback policy first, then constant directions."""
    if cost.gradient is None:
        raise ValueError("feedback policies need the cost gradient")
    fb = gradient_policy(frame, cost.gradient, "feedback")
    return PolicyFamily("feedback+constant", [fb] + constant_family(frame.nfields, n_directions).policies)


@dataclass
class _Target:
    exponent: float
    best: float = INF
    best_stderr: float = math.nan
    best_id: str = ""
    history: dict = field(default_factory=dict)


@dataclass
class ValueSearch:
    """Outcome of one scan: an estimate per exponent and per budget prefix."""

    t: float
    x: np.ndarray
    estimates: dict
    by_budget: dict
    shift: float
    evaluated: int
    pruned: int


class _PathSource:
    """Terminal states per block of paths for a given policy, on shared normals."""

    def __init__(self, frame: _PolyFrame, x, t: float, T: float, dt: float, K: int, seed: int):
        self.x = np.asarray(x, dtype=float)
        self.n_steps, self.dt = step_count(t, T, dt)
        self.t = t
        self.K = K
        self.seed = seed
        self.d = frame.nfields
        self.integ = Integrator.build(frame, CONTROL_SCALE)
        self.nblocks = -(-K // BLOCK)
        self.cache = None
        if K * self.n_steps * self.d <= NOISE_CACHE_LIMIT:
            self.cache = [self._make(b) for b in range(self.nblocks)]

    def _make(self, b: int) -> np.ndarray:
        count = min(BLOCK, self.K - b * BLOCK)
        return block_noise(self.seed, b, self.n_steps, self.d)[:count]

    def terminal(self, b: int, policy: ControlPolicy) -> np.ndarray:
        noise = self.cache[b] if self.cache is not None else self._make(b)
        y, _ = self.integ.run(self.x, noise, self.t, self.dt, policy)
        return y


def estimate_values(
    frame: _PolyFrame,
    cost: TerminalCost,
    t: float,
    x,
    exponents: Sequence[float],
    family: PolicyFamily,
    budget: int | None,
    K: int,
    seed: int,
    T: float,
    dt: float,
    threads: int = 1,
    budgets: Sequence[int] | None = None,
    shift: float | None = None,
    scale: float | None = None,
) -> ValueSearch:
    """Infimum over policies of the ``L^p`` cost (``p`` finite) and of the sample max (``p = inf``).

    Finite exponents work on ``g + shift`` (``shift = bound`` when ``g`` may
    be negative) and subtract the shift afterwards. Each policy is scanned
    block by block; it is dropped for an exponent as soon as a lower bound
    of its final value strictly exceeds the incumbent, which never changes
    the minimum. ``shift`` and ``scale`` override the cost's own choice; two
    costs compared on the same override give exactly ordered results.
    """
    x = np.asarray(x, dtype=float)
    exps = [float(p) for p in exponents]
    for p in exps:
        if not p > 1:
            raise ValueError("exponents must exceed 1")
    shift = cost.shift if shift is None else float(shift)
    policies = family.head(budget)
    if not policies:
        raise ValueError("empty policy family")
    marks = sorted(set(budgets or [len(policies)]))
    if t == T:
        gx = float(cost(x))
        est = {p: ValueEstimate(t, x, p, gx, 0.0, "terminal", K, seed, shift) for p in exps}
        return ValueSearch(t, x, est, {b: dict(est) for b in marks}, shift, 0, 0)
    if not t < T:
        raise ValueError("need t <= T")
    src = _PathSource(frame, x, t, T, dt, K, seed)
    if scale is None:
        scale = cost.bound + shift
        scale = scale if scale > 0 else 1.0
    elif not scale > 0:
        raise ValueError("scale must be positive")
    targets = [_Target(p) for p in exps]
    evaluated = pruned = 0
    batch = max(1, threads)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for idx, pol in enumerate(policies, start=1):
            if pol.dim != frame.nfields:
                raise ValueError(f"policy {pol.id} has dimension {pol.dim}, expected {frame.nfields}")
            active = list(range(len(targets)))
            acc = [[0.0, 0.0, -INF] for _ in targets]  # sum y^p, sum y^2p, max g
            b = 0
            while b < src.nblocks and active:
                blocks = list(range(b, min(b + batch, src.nblocks)))
                if pool is not None and len(blocks) > 1:
                    ends = list(pool.map(lambda j: src.terminal(j, pol), blocks))
                else:
                    ends = [src.terminal(j, pol) for j in blocks]
                for y in ends:
                    g = np.asarray(cost(y), dtype=float)
                    for ti in list(active):
                        tg = targets[ti]
                        a = acc[ti]
                        if tg.exponent == INF:
                            a[2] = max(a[2], float(np.max(g)))
                            if a[2] > tg.best:
                                active.remove(ti)
                        else:
                            a[2] = max(a[2], float(np.max(g)))
                            r = (g + shift) / scale
                            rp = r**tg.exponent
                            a[0] += float(np.sum(rp))
                            a[1] += float(np.sum(rp * rp))
                            if scale * (a[0] / K) ** (1.0 / tg.exponent) - shift > tg.best:
                                active.remove(ti)
                b = blocks[-1] + 1
            evaluated += 1
            if len(active) < len(targets):
                pruned += 1
            for ti in active:
                tg, a = targets[ti], acc[ti]
                if tg.exponent == INF:
                    val, se = a[2], math.nan
                else:
                    p = tg.exponent
                    mean = a[0] / K
                    # an L^p mean never exceeds the sample max; pin rounding to that
                    val = min(scale * mean ** (1.0 / p) - shift, a[2])
                    var = max(a[1] / K - mean * mean, 0.0) * K / max(K - 1, 1)
                    dl = scale * (1.0 / p) * mean ** (1.0 / p - 1.0) if mean > 0 else 0.0
                    se = dl * math.sqrt(var / K)
                if val < tg.best:
                    tg.best, tg.best_stderr, tg.best_id = val, se, pol.id
            if idx in marks:
                for tg in targets:
                    tg.history[idx] = ValueEstimate(
                        t, x, tg.exponent, tg.best, tg.best_stderr, tg.best_id, K, seed, 0.0 if tg.exponent == INF else shift
                    )
    finally:
        if pool is not None:
            pool.shutdown()
    final = len(policies)
    by_budget = {b: {tg.exponent: tg.history[b] for tg in targets} for b in marks if b <= final}
    last = {
        tg.exponent: ValueEstimate(t, x, tg.exponent, tg.best, tg.best_stderr, tg.best_id, K, seed,
                                   0.0 if tg.exponent == INF else shift)
        for tg in targets
    }
    return ValueSearch(t, x, last, by_budget, shift, evaluated, pruned)


def estimate_Vp(frame, cost, t, x, p, family, budget, K, seed, T, dt, threads: int = 1) -> ValueEstimate:
    """``inf`` over the first ``budget`` policies of ``E[g(xi_T)^p]^{1/p}``."""
    return estimate_values(frame, cost, t, x, [p], family, budget, K, seed, T, dt, threads).estimates[float(p)]


def estimate_Vinf(frame, cost, t, x, family, budget, K, seed, T, dt, threads: int = 1) -> ValueEstimate:
    """``inf`` over policies of the sample maximum of ``g(xi_T)``."""
    return estimate_values(frame, cost, t, x, [INF], family, budget, K, seed, T, dt, threads).estimates[INF]


def terminal_samples(frame, cost: TerminalCost, t, x, policy: ControlPolicy, K: int, seed: int, T: float, dt: float) -> np.ndarray:
    """``g(xi_T)`` for each path under one policy, in path order."""
    src = _PathSource(frame, x, t, T, dt, K, seed)
    return np.concatenate([np.asarray(cost(src.terminal(b, policy))) for b in range(src.nblocks)])
