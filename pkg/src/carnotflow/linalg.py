"""Small dense symmetric eigenproblems by cyclic Jacobi rotations.

Written in plain loops so the same source compiles under numba for the
PDE kernel; matrices here are at most a few rows wide.
"""

from __future__ import annotations

import numpy as np
from numba import njit

JACOBI_TOL = 1e-12
MAX_SWEEPS = 100


def _jacobi(a, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = np.sqrt(scale)
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if np.sqrt(off) <= tol * max(scale, 1.0):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v


_jacobi_nb = njit(cache=True)(_jacobi)


def jacobi_eigh(a, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigenvalues (ascending) and column eigenvectors of a symmetric matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.array_equal(a, a.T):
        a = 0.5 * (a + a.T)
    w, v = _jacobi_nb(np.ascontiguousarray(a), tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def lambda_max(a) -> float:
    return float(jacobi_eigh(a)[0][-1])


def lambda_min(a) -> float:
    return float(jacobi_eigh(a)[0][0])


@njit(cache=True)
def extreme_eigenvalues(a):
    """(lambda_min, lambda_max) of a small symmetric matrix; numba-callable."""
    w, _ = _jacobi_nb(a, JACOBI_TOL, MAX_SWEEPS)
    lo = w[0]
    hi = w[0]
    for i in range(1, w.shape[0]):
        lo = min(lo, w[i])
        hi = max(hi, w[i])
    return lo, hi
