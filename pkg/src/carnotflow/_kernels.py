"""Compiled inner loops for the level-set stepper and the Heun integrator."""

from __future__ import annotations

import numpy as np
from numba import njit

from .linalg import extreme_eigenvalues

CHAR_TOL = 1e-10
BLEND_FACTOR = 1e3


_RATE_KERNELS: dict = {}


def _sym(a: int, b: int) -> str:
    return f"S{min(a, b)}_{max(a, b)}"


def _poly_expr(terms, var: str = "x") -> str:
    """Inline source for a polynomial in the coordinates ``x0, x1, ...``."""
    parts = []
    for exps, coef in terms:
        factors = [repr(float(coef))]
        for k, e in enumerate(exps):
            factors += [f"{var}{k}"] * e
        parts.append(" * ".join(factors))
    return "(" + " + ".join(parts) + ")" if parts else "0.0"


def _node_lines(ndim: int, nrow: int, sig_terms, conn_terms, ind: str) -> list[str]:
    """Statements computing ``tr``, ``quad``, ``gg``, ``pn`` and ``M*`` at padded index ``j0, j1, ...``."""
    L = []
    w = lambda line: L.append(ind + line)

    def at(offsets: dict) -> str:
        idx = []
        for k in range(ndim):
            o = offsets.get(k, 0)
            idx.append(f"j{k}" + (f" + {o}" if o > 0 else f" - {-o}" if o < 0 else ""))
        return "u[" + ", ".join(idx) + "]"

    for k in range(ndim):
        w(f"x{k} = lo{k} + (j{k} - 1) * h{k}")
    w(f"u0 = {at({})}")
    for k in range(ndim):
        w(f"up{k} = {at({k: 1})}")
        w(f"um{k} = {at({k: -1})}")
        w(f"p{k} = (up{k} - um{k}) * cp{k}")
        w(f"S{k}_{k} = (up{k} - 2.0 * u0 + um{k}) * cs{k}")
    for k in range(ndim):
        for l in range(k + 1, ndim):
            w(
                f"S{k}_{l} = ({at({k: 1, l: 1})} - {at({k: 1, l: -1})}"
                f" - {at({k: -1, l: 1})} + {at({k: -1, l: -1})}) * cm{k}_{l}"
            )
    sig = {}
    for (i, a), terms in sorted(sig_terms.items()):
        if len(terms) == 1 and not any(terms[0][0]):
            sig[(i, a)] = repr(float(terms[0][1]))
        else:
            w(f"g{i}_{a} = {_poly_expr(terms)}")
            sig[(i, a)] = f"g{i}_{a}"

    def prod(x, y):
        if x == "1.0":
            return y
        if y == "1.0":
            return x
        return f"{x} * {y}"

    # T = sigma S, then M = T sigma^T + A
    for i in range(nrow):
        for bb in range(ndim):
            parts = [prod(sig[(i, a)], _sym(a, bb)) for a in range(ndim) if (i, a) in sig]
            w(f"T{i}_{bb} = " + (" + ".join(parts) if parts else "0.0"))
    extra = {}
    for i, j, k, terms in conn_terms:
        extra.setdefault((i, j), []).append(f"{_poly_expr(terms)} * p{k}")
    for i in range(nrow):
        for j in range(i, nrow):
            parts = [prod(f"T{i}_{bb}", sig[(j, bb)]) for bb in range(ndim) if (j, bb) in sig]
            parts += extra.get((i, j), [])
            w(f"M{i}_{j} = " + (" + ".join(parts) if parts else "0.0"))
    w("tr = " + " + ".join(f"M{i}_{i}" for i in range(nrow)))
    w("pn = np.sqrt(" + " + ".join(f"p{k} * p{k}" for k in range(ndim)) + ")")
    for i in range(nrow):
        parts = [prod(sig[(i, a)], f"p{a}") for a in range(ndim) if (i, a) in sig]
        w(f"G{i} = " + (" + ".join(parts) if parts else "0.0"))
    w("gg = " + " + ".join(f"G{i} * G{i}" for i in range(nrow)))
    quad = []
    for i in range(nrow):
        quad.append(f"G{i} * G{i} * M{i}_{i}")
        for j in range(i + 1, nrow):
            quad.append(f"2.0 * G{i} * G{j} * M{i}_{j}")
    w("quad = " + " + ".join(quad))
    return L


def _prologue(ndim: int) -> list[str]:
    L = []
    for k in range(ndim):
        L += [f"    cp{k} = cp[{k}]", f"    cs{k} = cs[{k}]", f"    lo{k} = lo[{k}]", f"    h{k} = h[{k}]"]
        L += [f"    cm{k}_{l} = cm[{k}, {l}]" for l in range(k + 1, ndim)]
    return L


def _rates_source(ndim: int, nrow: int, sig_terms, conn_terms) -> str:
    """Source of two unrolled kernels for one frame structure.

    ``sweep`` writes the regular rate ``Tr M - <M n, n>`` at every node of
    first-axis slab ``start:stop`` and flags nodes whose gradient is within
    the blending band; ``fixup`` recomputes flagged nodes with the upper
    envelope or the blend. ``u`` is the ghost-padded field; ``sig_terms``
    maps structurally nonzero frame entries ``(i, a)`` to polynomial terms and
    ``conn_terms`` lists ``(i, j, k, terms)`` connection coefficients, ``i <= j``.
    """
    L = ["def sweep(u, cp, cs, cm, lo, h, start, stop, rates, flag):"]
    L += _prologue(ndim)
    ind = "    "
    for k in range(ndim):
        rng = "range(start + 1, stop + 1)" if k == 0 else f"range(1, rates.shape[{k}] + 1)"
        L.append(f"{ind}for j{k} in {rng}:")
        ind += "    "
    L += _node_lines(ndim, nrow, sig_terms, conn_terms, ind)
    out = "rates[" + ", ".join(f"j{k} - 1" for k in range(ndim)) + "]"
    fl = "flag[" + ", ".join(f"j{k} - 1" for k in range(ndim)) + "]"
    L.append(f"{ind}{out} = tr - quad / gg")
    L.append(f"{ind}{fl} = pn < {BLEND_FACTOR * CHAR_TOL!r} * (1.0 + pn)")
    L.append("")
    L.append("def fixup(u, cp, cs, cm, lo, h, nodes, rates):")
    L += _prologue(ndim)
    L.append("    n_env = 0")
    L.append("    n_blend = 0")
    L.append(f"    M = np.empty(({nrow}, {nrow}))")
    L.append("    for q in range(nodes.shape[0]):")
    ind = "        "
    for k in range(ndim):
        L.append(f"{ind}j{k} = nodes[q, {k}] + 1")
    L += _node_lines(ndim, nrow, sig_terms, conn_terms, ind)
    L.append(f"{ind}tol = {CHAR_TOL!r} * (1.0 + pn)")
    for i in range(nrow):
        for j in range(nrow):
            L.append(f"{ind}M[{i}, {j}] = M{min(i, j)}_{max(i, j)}")
    L.append(f"{ind}lo_eig, hi_eig = extreme_eigenvalues(M)")
    L.append(f"{ind}envelope = tr - hi_eig")
    L.append(f"{ind}if pn <= tol:")
    L.append(f"{ind}    {out} = envelope")
    L.append(f"{ind}    n_env += 1")
    L.append(f"{ind}elif pn < {BLEND_FACTOR!r} * tol:")
    L.append(f"{ind}    wt = (pn - tol) / ({BLEND_FACTOR!r} * tol - tol)")
    L.append(f"{ind}    {out} = wt * (tr - quad / gg) + (1.0 - wt) * envelope")
    L.append(f"{ind}    n_blend += 1")
    L.append("    return n_env, n_blend")
    return "\n".join(L) + "\n"


def rates_kernel(ndim: int, nrow: int, sig_terms, conn_terms):
    """``(sweep, fixup)`` compiled for the given frame structure, cached per process."""
    key = (ndim, nrow, tuple(sorted(sig_terms.items())), tuple(conn_terms))
    fns = _RATE_KERNELS.get(key)
    if fns is None:
        src = _rates_source(ndim, nrow, sig_terms, conn_terms)
        scope = {"np": np, "extreme_eigenvalues": extreme_eigenvalues}
        exec(compile(src, f"<levelset-kernel-{ndim}x{nrow}>", "exec"), scope)
        opts = dict(nogil=True, error_model="numpy")
        fns = (njit(**opts)(scope["sweep"]), njit(**opts)(scope["fixup"]))
        _RATE_KERNELS[key] = fns
    return fns


_HEUN_KERNELS: dict = {}


def _heun_source(ndim: int, nrow: int, sig_terms) -> str:
    L = ["def heun(y, noise, sqrt_dt, scale, control, per_path):"]
    w = lambda ind, line: L.append("    " * ind + line)
    w(1, "half = 0.5 * scale")
    w(1, "for k in range(y.shape[0]):")
    w(2, "row = k if per_path else 0")
    for i in range(nrow):
        w(2, f"c{i} = control[row, {i}]")
    for a in range(ndim):
        w(2, f"x{a} = y[k, {a}]")
    w(2, "for s in range(noise.shape[1]):")
    for i in range(nrow):
        w(3, f"w{i} = noise[k, s, {i}] * sqrt_dt")
    w(3, "dot = " + " + ".join(f"c{i} * w{i}" for i in range(nrow)))
    for i in range(nrow):
        w(3, f"w{i} -= dot * c{i}")
    # sigma entries at x, the predictor z, then the corrector
    for var, pre in (("x", "s"), ("z", "t")):
        for (i, a), terms in sorted(sig_terms.items()):
            w(3, f"{pre}{i}_{a} = {_poly_expr(terms, var)}")
        if var == "x":
            for a in range(ndim):
                acc = [f"s{i}_{a} * w{i}" for i in range(nrow) if (i, a) in sig_terms]
                w(3, f"z{a} = x{a} + scale * ({' + '.join(acc) if acc else '0.0'})")
    for a in range(ndim):
        acc = [f"(s{i}_{a} + t{i}_{a}) * w{i}" for i in range(nrow) if (i, a) in sig_terms]
        if acc:
            w(3, f"x{a} = x{a} + half * ({' + '.join(acc)})")
    for a in range(ndim):
        w(2, f"y[k, {a}] = x{a}")
    return "\n".join(L) + "\n"


def heun_kernel(ndim: int, nrow: int, sig_terms):
    """Stratonovich-Heun stepper compiled for one frame structure.

    The returned ``heun(y, noise, sqrt_dt, scale, control, per_path)``
    advances ``y`` (K x N) in place through ``noise`` (K x steps x d) for
    ``dY = scale * sigma(Y)^T dW``. Each increment is projected by
    ``I - a a^T`` with ``a`` row ``k`` of ``control`` when ``per_path`` is
    set, else row 0; a zero row leaves the increment unprojected.
    """
    key = (ndim, nrow, tuple(sorted(sig_terms.items())))
    fn = _HEUN_KERNELS.get(key)
    if fn is None:
        src = _heun_source(ndim, nrow, sig_terms)
        scope = {"np": np}
        exec(compile(src, f"<heun-kernel-{ndim}x{nrow}>", "exec"), scope)
        fn = njit(nogil=True, error_model="numpy")(scope["heun"])
        _HEUN_KERNELS[key] = fn
    return fn
