"""Property suites run by the ``check`` command.

Each suite takes ``(cfg, threads)`` and returns ``(header, rows, verdicts)``
where ``verdicts`` is a list of ``(passed, message)`` pairs.
"""

from __future__ import annotations

import math

import numpy as np

from . import frames as fr
from .config import ExperimentConfig
from .costs import TerminalCost
from .linalg import jacobi_eigh

DEFAULT_TOL = {"hamiltonian": 1e-3, "lambda_max": 1e-5, "order": 0.9}
WEAK_DTS = (4e-3, 2e-3, 1e-3)
RHS_NODES = (17, 33, 65)
LAMBDA_GAP = 1e-2


def _tol(cfg: ExperimentConfig, name: str) -> float:
    v = getattr(cfg.tolerance, name)
    return DEFAULT_TOL[name] if v is None else v


def _sym(rng, n: int) -> np.ndarray:
    a = rng.uniform(-2.0, 2.0, (n, n))
    return np.triu(a) + np.triu(a, 1).T


def _suite_frames(cfg: ExperimentConfig, threads: int):
    frame = cfg.base_frame()
    eframe = cfg.eps_frame()
    rng = np.random.default_rng(cfg.seed)
    n = frame.dim
    rows, worst_jac, steps, worst_sig = [], 0.0, [], 0.0
    step = 1e-6
    for k in range(cfg.check.cases):
        x = rng.uniform(-2.0, 2.0, n)
        s = fr.hormander_check(frame, x, n)
        steps.append(s)
        jac_err = 0.0
        for i in range(frame.rank):
            J = frame.jacobian(i, x)
            fd = np.stack(
                [(frame.field(i, x + step * e) - frame.field(i, x - step * e)) / (2 * step) for e in np.eye(n)], axis=1
            )
            jac_err = max(jac_err, float(np.max(np.abs(J - fd))))
        sig = eframe.sigma(x)
        # rows m..N-1 of sigma_eps are eps * e_k; the whole matrix is invertible
        tail = np.abs(sig[frame.rank:] - cfg.epsilon * np.eye(n)[frame.rank:]).max(initial=0.0)
        det = float(np.linalg.det(sig))
        worst_jac = max(worst_jac, jac_err)
        worst_sig = max(worst_sig, float(tail))
        rows.append((k, *x, -1 if s is None else s, jac_err, det))
    header = ["case"] + [f"x{i + 1}" for i in range(n)] + ["bracket_step", "jacobian_err", "det_sigma_eps"]
    verdicts = [
        (all(s is not None for s in steps), f"bracket-generating at all {len(steps)} points (max step {max(s or 0 for s in steps)})"),
        (worst_jac <= 1e-6, f"analytic Jacobians match central differences to {worst_jac:.2e}"),
        (worst_sig == 0.0 and all(abs(r[-1]) > 0 for r in rows), "sigma_eps completion rows exact and sigma_eps invertible"),
    ]
    return header, rows, verdicts


def _suite_levelset(cfg: ExperimentConfig, threads: int):
    """Grid rates against the exact operator on a smooth field, under refinement."""
    from .pde_engine import F_eps, Stencil, discrete_rhs
    from .grid import sample
    from .sde_engine import smooth_test_function

    eframe = cfg.eps_frame()
    n = eframe.dim
    phi = smooth_test_function(n)
    bounds = [(-1.0, 1.0)] * n
    probes = np.random.default_rng(cfg.seed).uniform(-0.5, 0.5, (8, n))
    rows, errs, hs = [], [], []
    nodes_list = RHS_NODES if n <= 2 else RHS_NODES[:2] + (49,)
    for nodes in nodes_list:
        fld = sample(bounds, (nodes,) * n, lambda x: phi(0.0, x))
        rates, _, _ = discrete_rhs(fld, Stencil.build(eframe, fld), threads)
        h = fld.h
        # snap probes to nodes so no interpolation error enters
        idx = np.rint((probes + 1.0) / h).astype(int)
        err = 0.0
        for ix in idx:
            x = -1.0 + ix * h
            exact = -F_eps(eframe, x, phi.gradient(0.0, x), phi.hessian(0.0, x))
            err = max(err, abs(float(rates[tuple(ix)]) - exact))
        errs.append(err)
        hs.append(float(h[0]))
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(hs[i] / hs[i + 1]) for i in range(len(errs) - 1)]
    for i, (nodes, h, e) in enumerate(zip(nodes_list, hs, errs)):
        rows.append((nodes, h, e, orders[i - 1] if i > 0 else math.nan))
    worst = min(orders)
    return ["nodes", "h", "max_abs_err", "observed_order"], rows, [
        (worst >= 0.9, f"grid operator consistent with observed order {worst:.3f} >= 0.9")
    ]


def _suite_hamiltonian(cfg: ExperimentConfig, threads: int):
    from .value_engine import hamiltonian_H_eps

    eframe = cfg.eps_frame()
    rng = np.random.default_rng(cfg.seed)
    n = eframe.dim
    rows = []
    for k in range(cfg.check.cases):
        x = rng.uniform(-2.0, 2.0, n)
        p = rng.uniform(-2.0, 2.0, n)
        S = _sym(rng, n)
        bf = hamiltonian_H_eps(eframe, x, p, S, cfg.check.directions, cfg.check.refine).value
        X = eframe.matrix(x)
        C = X @ S @ X.T - eframe.connection_matrix(x, p)
        C = 0.5 * (C + C.T)
        closed = float(-np.trace(C) + jacobi_eigh(C)[0][-1])
        rows.append((k, bf, closed, abs(bf - closed)))
    worst = max(r[3] for r in rows)
    tol = _tol(cfg, "hamiltonian")
    return ["case_id", "bruteforce", "closedform", "abs_err"], rows, [
        (worst <= tol, f"max |brute force - closed form| {worst:.3e} <= {tol} over {len(rows)} cases")
    ]


def _suite_lambda_max(cfg: ExperimentConfig, threads: int):
    from .value_engine import lambda_max_derivative_check

    rng = np.random.default_rng(cfg.seed)
    n = cfg.dim
    rows = []
    while len(rows) < cfg.check.cases:
        S = _sym(rng, n)
        w = jacobi_eigh(S)[0]
        if w[-1] - w[-2] < LAMBDA_GAP:
            continue
        H = _sym(rng, n)
        fd, ip = lambda_max_derivative_check(S, H)
        rows.append((len(rows), fd, ip, abs(fd - ip) / max(abs(ip), 1.0)))
    worst = max(r[3] for r in rows)
    tol = _tol(cfg, "lambda_max")
    return ["case", "fd", "ip", "rel_err"], rows, [
        (worst <= tol, f"max relative disagreement {worst:.3e} <= {tol} over {len(rows)} pairs")
    ]


def _exp_cost(cost: TerminalCost) -> TerminalCost:
    return TerminalCost(lambda x: np.exp(cost(x)), math.exp(cost.upper), 0.0, math.exp(cost.lower), None,
                        "exp-" + cost.name, {"upper": math.exp(cost.upper)})


def _raised_cost(cost: TerminalCost, c: float) -> TerminalCost:
    return TerminalCost(lambda x: cost(x) + c, cost.bound + c, cost.lipschitz, cost.lower + c, cost.gradient,
                        cost.name + "+c", {"upper": cost.upper + c})


def _suite_value_lemmas(cfg: ExperimentConfig, threads: int):
    """Ordering in p, comparison and monotone-map commutation on common random numbers."""
    from .value_engine import constant_family, estimate_values, feedback_family

    spec = cfg.check
    frame = cfg.eps_frame()
    g1 = cfg.terminal_cost()
    g2 = _raised_cost(g1, 0.5)
    eg = _exp_cost(g1)
    if cfg.control.family == "feedback" and g1.gradient is not None:
        family = feedback_family(frame, g1, cfg.control.directions or 16)
    else:
        family = constant_family(frame.nfields, cfg.control.directions or 16)
    budget = cfg.control.budget
    rng = np.random.default_rng(cfg.seed)
    pts = rng.uniform(-1.0, 1.0, (spec.points, cfg.dim))
    ps = tuple(sorted(spec.p)) + (math.inf,)
    shift = max(g1.shift, g2.shift)
    scale = g2.bound + shift
    rows = []
    ok_a = ok_b = ok_c = True
    for i, x in enumerate(pts):
        args = (0.0, x, ps, family, budget, spec.K, cfg.seed, spec.T, spec.dt, threads)
        r1 = estimate_values(frame, g1, *args, shift=shift, scale=scale).estimates
        r2 = estimate_values(frame, g2, *args, shift=shift, scale=scale).estimates
        r1_own = estimate_values(frame, g1, *args).estimates
        re = estimate_values(frame, eg, *args).estimates
        v = [r1_own[p].estimate for p in ps]
        ok_a &= all(a <= b for a, b in zip(v, v[1:]))
        ok_b &= all(r1[p].estimate <= r2[p].estimate for p in ps)
        ok_c &= re[math.inf].estimate == math.exp(r1_own[math.inf].estimate)
        # reported only: the gap vanishes as p grows but need not shrink monotonically
        gaps = [abs(math.exp(r1_own[p].estimate) - re[p].estimate) for p in ps[:-1]]
        for p, gp in zip(ps, gaps + [0.0]):
            rows.append((i, *x, "inf" if math.isinf(p) else p, r1_own[p].estimate, r1[p].estimate, r2[p].estimate,
                         re[p].estimate, gp))
    header = ["point"] + [f"x{k + 1}" for k in range(cfg.dim)] + [
        "p", "v_g", "v_g_common", "v_g_raised", "v_exp_g", "exp_gap"]
    return header, rows, [
        (ok_a, f"V_p nondecreasing over p and bounded by V_inf at {spec.points} points"),
        (ok_b, "g1 <= g2 gives ordered estimates for every exponent"),
        (ok_c, "sample-max estimate commutes exactly with exp"),
    ]


def _suite_weak_order(cfg: ExperimentConfig, threads: int):
    from .sde_engine import generator_consistency, smooth_test_function

    frame = cfg.eps_frame()
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(-0.5, 0.5, cfg.dim)
    a = rng.standard_normal(frame.nfields)
    res = generator_consistency(frame, smooth_test_function(cfg.dim), x, a, WEAK_DTS, cfg.check.K, cfg.seed, threads)
    orders = list(res.orders)
    rows = [(dt, e, s, orders[i - 1] if i else math.nan) for i, (dt, e, s) in enumerate(zip(res.dts, res.errors, res.stderrs))]
    tol = _tol(cfg, "order")
    return ["dt", "weak_error", "stderr", "observed_order"], rows, [
        (min(orders) >= tol, f"observed weak order {min(orders):.3f} >= {tol}")
    ]


SUITES = {
    "frames": _suite_frames,
    "levelset": _suite_levelset,
    "hamiltonian": _suite_hamiltonian,
    "lambda-max": _suite_lambda_max,
    "value-lemmas": _suite_value_lemmas,
    "weak-order": _suite_weak_order,
}
