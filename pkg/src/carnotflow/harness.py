"""Configuration-driven runs that write CSV artifacts and a manifest.

Every ``run_*`` function takes a parsed config, an output directory and a
worker count, writes its files, and returns a :class:`RunResult` whose
``failures`` list is empty when all configured assertions hold.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .contour import radial_axes_for, zero_set_radius
from .grid import LevelSetField, sample
from .levelset_ops import CHAR_TOL

CSV_FLOAT = "%.17g"


class OutputLocked(RuntimeError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


@dataclass
class RunResult:
    command: str
    out: Path
    files: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class Run:
    """Output-directory owner: file writing, digests, timings, manifest."""

    def __init__(self, command: str, cfg: ExperimentConfig, out: Path, threads: int):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.threads = threads
        self.result = RunResult(command, self.out)
        self.derived: dict[str, object] = {}
        self.timings: list[tuple[str, float]] = []

    def write_csv(self, name: str, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        self._register(path)
        return path

    def write_array(self, name: str, header: Iterable[str], arr: np.ndarray) -> Path:
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, arr, fmt=CSV_FLOAT, delimiter=",")
        self._register(path)
        return path

    def _register(self, path: Path) -> None:
        self.result.files[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings.append((name, time.perf_counter() - t0))

    def check(self, ok: bool, message: str) -> None:
        (self.result.notes if ok else self.result.failures).append(("PASS " if ok else "FAIL ") + message)

    def write_manifest(self) -> None:
        lines = [
            f"command = {self.command}",
            f"code_version = {__version__}",
            f"frame = {self.cfg.frame}",
            f"epsilon = {fmt(self.cfg.epsilon)}",
            f"seed = {self.cfg.seed}",
            f"threads = {self.threads}",
            "",
            "[derived]",
        ]
        lines += [f"{k} = {fmt(v)}" for k, v in self.derived.items()]
        lines += ["", "[timings_seconds]"]
        lines += [f"{k} = {v:.3f}" for k, v in self.timings]
        lines += ["", "[assertions]"]
        lines += self.result.notes + self.result.failures
        lines += ["", "[files]"]
        lines += [f"{digest}  {name}" for name, digest in sorted(self.result.files.items())]
        cover = hashlib.sha256("".join(f"{n}:{d}\n" for n, d in sorted(self.result.files.items())).encode())
        lines += ["", f"files_digest = {cover.hexdigest()}", "", "[config]", self.cfg.source.rstrip("\n"), ""]
        (self.out / "manifest").write_text("\n".join(lines), encoding="utf-8")


@contextmanager
def open_run(command: str, cfg: ExperimentConfig, out, threads: int):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise OutputLocked(f"{out} is in use by another run (remove {lock} if stale)") from exc
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    run = Run(command, cfg, out, threads)
    try:
        yield run
        run.write_manifest()
    finally:
        lock.unlink(missing_ok=True)


def _need(cfg: ExperimentConfig, *sections: str) -> None:
    missing = [s for s in sections if not cfg.has(s)]
    if missing:
        raise ConfigError("this command needs the section(s): " + ", ".join(f"[{s}]" for s in missing))


def _axis_names(dim: int) -> list[str]:
    return [f"x{k + 1}" for k in range(dim)]


# --- PDE ---------------------------------------------------------------------


def _initial_field(cfg: ExperimentConfig, nodes=None) -> LevelSetField:
    cost = cfg.terminal_cost()
    return sample(cfg.grid.bounds, nodes or cfg.grid.nodes, cost)


def exact_radius(cfg: ExperimentConfig, t: float) -> float:
    """Zero-set radius of the exact flow where it is known, else NaN."""
    c = cfg.cost
    if c.name == "cylinder" and (cfg.frame == "heisenberg1" or (cfg.frame == "euclidean" and cfg.dim >= 2)):
        k = 2
    elif c.name == "sphere" and cfg.frame == "euclidean":
        k = cfg.dim
    else:
        return math.nan
    r2 = c.radius**2 - 2.0 * (k - 1) * t
    return math.sqrt(r2) if r2 > 0 else 0.0


def _pde_series(cfg: ExperimentConfig, epsilon: float, threads: int, nodes=None, keep: str = "none"):
    from . import pde_engine

    eframe = cfg.eps_frame(epsilon)
    field0 = _initial_field(cfg, nodes)
    axes = radial_axes_for(cfg.cost.name, cfg.dim)
    radii, snaps = [], []

    def on_snap(f: LevelSetField):
        if axes is not None:
            radii.append(zero_set_radius(f, axes))
        if keep == "all":
            snaps.append(f)

    tspec = cfg.time
    traj = pde_engine.evolve(
        eframe, field0, tspec.T, dt=tspec.dt, snapshot_every=tspec.snapshot_every,
        threads=threads, n_steps=tspec.steps, on_snapshot=on_snap,
    )
    if keep == "last":
        snaps = [traj.final]
    return traj, radii, snaps


def _radius_rows(cfg, radii):
    rows = []
    for r in radii:
        ex = exact_radius(cfg, r.time)
        rel = abs(r.radius - ex) / ex if ex > 0 and not math.isnan(r.radius) else math.nan
        rows.append((r.time, r.radius, ex, rel, r.crossings))
    return rows


def _radius_check(run: Run, cfg: ExperimentConfig, rows, label: str = "") -> None:
    tol = cfg.tolerance.radius
    if tol is None:
        return
    lo, hi = cfg.tolerance.radius_window or (-math.inf, math.inf)
    errs = [r[3] for r in rows if lo - 1e-12 <= r[0] <= hi + 1e-12]
    worst = max(errs) if errs else math.nan
    ok = bool(errs) and all(e <= tol for e in errs)
    run.check(ok, f"{label}radius relative error {worst:.3e} <= {tol} over {len(errs)} snapshot(s)")


def run_pde(cfg: ExperimentConfig, out, threads: int = 1) -> RunResult:
    _need(cfg, "grid", "time", "cost")
    with open_run("pde", cfg, out, threads) as run:
        with run.stage("evolve"):
            traj, radii, snaps = _pde_series(cfg, cfg.epsilon, threads, keep=cfg.output.snapshots)
        names = _axis_names(cfg.dim)
        with run.stage("write"):
            for k, snap in enumerate(snaps):
                data = np.column_stack([snap.coordinates().reshape(-1, cfg.dim), snap.values.reshape(-1)])
                run.write_array(f"snapshot_{k:04d}.csv", names + ["u"], data)
            run.write_csv("snapshot_times.csv", ["index", "time"], [(k, s.time) for k, s in enumerate(traj.snapshots)])
            run.write_csv(
                "steps.csv", ["step", "time", "u_min", "u_max", "envelope_nodes", "blended_nodes"],
                [(s.step, s.time, s.u_min, s.u_max, s.envelope_nodes, s.blended_nodes) for s in traj.steps],
            )
            rows = _radius_rows(cfg, radii)
            if radii:
                run.write_csv("radius.csv", ["time", "radius", "exact", "rel_err", "crossings"], rows)
        run.derived.update(
            dt=traj.dt, cfl_dt=traj.cfl_dt, cfl_safety=0.2, steps=traj.n_steps, tol_char=CHAR_TOL,
            h=",".join(fmt(v) for v in traj.final.h), envelope_triggers=traj.envelope_triggers,
            blend_triggers=traj.blend_triggers,
        )
        _radius_check(run, cfg, rows)
        if cfg.tolerance.stationary is not None:
            first, last = traj.snapshots[0].values, traj.final.values
            inner = tuple(slice(1, -1) for _ in range(cfg.dim))
            change = float(np.max(np.abs(last[inner] - first[inner])))
            run.derived["interior_change"] = change
            run.check(change <= cfg.tolerance.stationary, f"interior change {change:.3e} <= {cfg.tolerance.stationary}")
    return run.result


# --- stochastic --------------------------------------------------------------


def _family(cfg: ExperimentConfig, frame, cost):
    from . import value_engine

    if cfg.control.family == "feedback":
        return value_engine.feedback_family(frame, cost, cfg.control.directions)
    return value_engine.constant_family(frame.nfields, cfg.control.directions)


def _control_frame(cfg: ExperimentConfig):
    return cfg.eps_frame() if cfg.control.mode == "controlled-eps" else cfg.base_frame()


def run_simulate(cfg: ExperimentConfig, out, threads: int = 1) -> RunResult:
    from . import sde_engine

    _need(cfg, "simulate")
    sp = cfg.simulate
    x0 = np.zeros(cfg.dim) if sp.x0 is None else np.array(sp.x0)
    with open_run("simulate", cfg, out, threads) as run:
        with run.stage("simulate"):
            if sp.kind == "horizontal-bm":
                ens = sde_engine.simulate_horizontal_bm(
                    cfg.base_frame(), x0, sp.T, sp.dt, sp.K, cfg.seed, threads, sp.record_every or None
                )
                horizon = sp.T
            else:
                frame = _control_frame(cfg)
                if sp.policy == "feedback":
                    cost = cfg.terminal_cost()
                    policy = sde_engine.gradient_policy(frame, cost.gradient)
                else:
                    if sp.direction is None or len(sp.direction) != frame.nfields:
                        raise ConfigError(f"simulate.direction needs {frame.nfields} entries")
                    policy = sde_engine.constant_policy(sp.direction)
                ens = sde_engine.simulate_controlled(
                    frame, x0, sp.t, sp.T, sp.dt, sp.K, cfg.seed, policy, cfg.control.mode, threads,
                    sp.record_every or None,
                )
                horizon = sp.T - sp.t
        names = _axis_names(cfg.dim)
        term = ens.terminal
        mean = term.mean(axis=0)
        var = term.var(axis=0, ddof=1)
        rows = [(names[k], mean[k], var[k], math.sqrt(var[k] / ens.K)) for k in range(cfg.dim)]
        run.write_csv("terminal_moments.csv", ["coordinate", "mean", "variance", "stderr_mean"], rows)
        if sp.dump_paths:
            K, R, N = ens.paths.shape
            steps = np.round((ens.record_times - ens.origin[0]) / ens.dt).astype(np.int64)
            data = np.column_stack([
                np.repeat(np.arange(K), R), np.tile(steps, K), np.tile(ens.record_times, K), ens.paths.reshape(-1, N)
            ])
            run.write_array("paths.csv", ["path", "step", "s"] + names, data)
        run.derived.update(K=ens.K, dt=ens.dt, steps=ens.n_steps, policy_id=ens.policy_id, mode=ens.mode, noise_scale=ens.scale)
        if sp.kind == "horizontal-bm" and cfg.frame == "heisenberg1" and not np.any(x0):
            x3 = term[:, 2]
            m2 = float(np.mean(x3 * x3))
            se2 = float(np.std(x3 * x3, ddof=1) / math.sqrt(ens.K))
            m1 = float(np.mean(x3))
            se1 = float(np.std(x3, ddof=1) / math.sqrt(ens.K))
            target = horizon**2 / 4.0
            run.write_csv(
                "levy_area.csv", ["statistic", "estimate", "stderr", "oracle", "rel_err"],
                [("E[x3^2]", m2, se2, target, abs(m2 - target) / target), ("E[x3]", m1, se1, 0.0, math.nan)],
            )
            if cfg.tolerance.levy is not None:
                run.check(abs(m2 - target) <= cfg.tolerance.levy * target,
                          f"E[x3^2] = {m2:.5f} within {cfg.tolerance.levy:.0%} of {target}")
                run.check(abs(m1) <= 3.0 * se1, f"|E[x3]| = {abs(m1):.2e} <= 3 stderr ({3 * se1:.2e})")
    return run.result


def _p_label(p: float) -> str:
    return "inf" if math.isinf(p) else fmt(p)


def _monotone_in_p(ests: dict) -> bool:
    ps = sorted(ests)
    vals = [ests[p].estimate for p in ps]
    return all(a <= b for a, b in zip(vals, vals[1:]))


def run_value(cfg: ExperimentConfig, out, threads: int = 1) -> RunResult:
    from . import value_engine

    _need(cfg, "value", "cost")
    vs = cfg.value
    if not vs.points:
        raise ConfigError("value.points must list at least one point")
    frame = _control_frame(cfg)
    cost = cfg.terminal_cost()
    family = _family(cfg, frame, cost)
    names = _axis_names(cfg.dim)
    with open_run("value", cfg, out, threads) as run:
        rows, brow = [], []
        with run.stage("estimate"):
            for x in vs.points:
                res = value_engine.estimate_values(
                    frame, cost, vs.t, np.array(x), vs.p, family, cfg.control.budget, vs.K, cfg.seed, vs.T, vs.dt,
                    threads, cfg.control.budgets or None,
                )
                for p in sorted(res.estimates):
                    e = res.estimates[p]
                    rows.append((vs.t, *x, _p_label(p), e.estimate, e.stderr, e.policy_id, e.K, e.seed))
                for b, ests in res.by_budget.items():
                    for p in sorted(ests):
                        brow.append((*x, b, _p_label(p), ests[p].estimate, ests[p].policy_id))
                run.check(_monotone_in_p(res.estimates), f"estimates nondecreasing in p at {list(x)}")
        run.write_csv("values.csv", ["t"] + names + ["p", "estimate", "stderr", "policy_id", "K", "seed"], rows)
        if cfg.control.budgets:
            run.write_csv("budgets.csv", names + ["budget", "p", "estimate", "policy_id"], brow)
        run.derived.update(shift=cost.shift, cost=cost.name, family=family.name, policies=len(family.head(cfg.control.budget)))
    return run.result


# --- comparison --------------------------------------------------------------


def pde_values(cfg: ExperimentConfig, points, threads: int = 1):
    """``u(T - t, x)`` at ``points`` from a grid run; no stochastic code involved."""
    from . import pde_engine

    tau = cfg.value.T - cfg.value.t
    field0 = _initial_field(cfg)
    pts = np.asarray(points, dtype=float)
    if not np.all(field0.contains(pts)):
        raise ConfigError("comparison points must lie inside the grid")
    if tau == 0:
        return field0.interpolate(pts), None
    traj = pde_engine.evolve(cfg.eps_frame(), field0, tau, dt=cfg.time.dt, threads=threads)
    return traj.final.interpolate(pts), traj


def run_compare(cfg: ExperimentConfig, out, threads: int = 1) -> RunResult:
    from . import value_engine

    _need(cfg, "grid", "value", "cost")
    vs = cfg.value
    if not vs.points:
        raise ConfigError("value.points must list at least one point")
    if math.inf not in vs.p:
        raise ConfigError("value.p must include \"inf\" for a comparison")
    if cfg.control.mode != "controlled-eps":
        raise ConfigError("the comparison uses the approximated (controlled-eps) dynamics")
    cost = cfg.terminal_cost()
    names = _axis_names(cfg.dim)
    with open_run("compare", cfg, out, threads) as run:
        with run.stage("pde"):
            u, traj = pde_values(cfg, vs.points, threads)
        frame = cfg.eps_frame()
        family = _family(cfg, frame, cost)
        pmax = max((p for p in vs.p if not math.isinf(p)), default=None)
        tol = cfg.tolerance.compare
        g_range = cost.range
        rows, brow = [], []
        with run.stage("value"):
            for i, x in enumerate(vs.points):
                res = value_engine.estimate_values(
                    frame, cost, vs.t, np.array(x), vs.p, family, cfg.control.budget, vs.K, cfg.seed, vs.T, vs.dt,
                    threads, cfg.control.budgets or None,
                )
                vinf = res.estimates[math.inf]
                vp = res.estimates[pmax] if pmax is not None else None
                gap = abs(float(u[i]) - vinf.estimate)
                rows.append((i, *x, float(u[i]), vinf.estimate, vp.estimate if vp else math.nan, gap, vinf.policy_id))
                if tol is not None:
                    run.check(gap <= tol * g_range, f"point {i}: |PDE - V_inf| = {gap:.4f} <= {tol * g_range:.4f}")
                run.check(_monotone_in_p(res.estimates), f"point {i}: V_p nondecreasing in p and <= V_inf")
                gaps = []
                for b in sorted(res.by_budget):
                    e = res.by_budget[b][math.inf]
                    gb = abs(float(u[i]) - e.estimate)
                    gaps.append(gb)
                    brow.append((i, b, e.estimate, gb, e.policy_id))
                if len(gaps) > 1:
                    run.check(all(a >= b for a, b in zip(gaps, gaps[1:])), f"point {i}: gap non-increasing over budgets")
        run.write_csv("compare.csv", ["point"] + names + ["pde", "v_inf", "v_pmax", "gap", "policy_id"], rows)
        if brow:
            run.write_csv("budget_gaps.csv", ["point", "budget", "v_inf", "gap", "policy_id"], brow)
        run.derived.update(
            horizon=vs.T - vs.t, g_range=g_range, p_max=pmax if pmax is not None else math.nan,
            pde_dt=traj.dt if traj else math.nan, pde_steps=traj.n_steps if traj else 0, shift=cost.shift,
        )
    return run.result


# --- sweeps ------------------------------------------------------------------


def _random_case(rng, dim: int):
    x = rng.uniform(-2.0, 2.0, dim)
    p = rng.uniform(-2.0, 2.0, dim)
    S = rng.uniform(-2.0, 2.0, (dim, dim))
    S = np.triu(S) + np.triu(S, 1).T
    return x, p, S


def run_sweep(cfg: ExperimentConfig, out, threads: int = 1) -> RunResult:
    _need(cfg, "sweep")
    sw = cfg.sweep
    with open_run("sweep", cfg, out, threads) as run:
        with run.stage(sw.axis):
            if sw.axis == "epsilon":
                _sweep_epsilon(run, cfg, threads)
            elif sw.axis == "h":
                _sweep_h(run, cfg, threads)
            elif sw.axis == "dt":
                _sweep_dt(run, cfg, threads)
            elif sw.axis in ("p", "K"):
                _sweep_value(run, cfg, threads)
            else:
                _sweep_directions(run, cfg)
    return run.result


def _sweep_epsilon(run: Run, cfg: ExperimentConfig, threads: int) -> None:
    _need(cfg, "grid", "time", "cost")
    series = {}
    rows = []
    for eps in cfg.sweep.values:
        traj, radii, _ = _pde_series(cfg, eps, threads)
        rr = _radius_rows(cfg, radii)
        series[eps] = rr
        rows += [(eps, *r) for r in rr]
        run.derived[f"steps_eps_{fmt(eps)}"] = traj.n_steps
        _radius_check(run, cfg, rr, f"epsilon {fmt(eps)}: ")
    run.write_csv("sweep.csv", ["epsilon", "time", "radius", "exact", "rel_err", "crossings"], rows)
    axes = radial_axes_for(cfg.cost.name, cfg.dim) or list(range(cfg.dim))
    h = np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(cfg.grid.bounds, cfg.grid.nodes)])
    band = cfg.tolerance.spread if cfg.tolerance.spread is not None else float(np.min(h[axes]))
    spreads = []
    for k in range(len(next(iter(series.values())))):
        vals = [series[e][k][1] for e in series]
        if any(math.isnan(v) for v in vals):
            continue
        spreads.append(max(vals) - min(vals))
    worst = max(spreads) if spreads else 0.0
    run.derived.update(spread_band=band, max_spread=worst)
    if len(series) > 1:
        run.check(worst < band, f"radius spread across epsilon {worst:.3e} < band {band:.3e}")


def _sweep_h(run: Run, cfg: ExperimentConfig, threads: int) -> None:
    _need(cfg, "grid", "time", "cost")
    rows = []
    for n in cfg.sweep.values:
        nodes = (n,) * cfg.dim
        traj, radii, _ = _pde_series(cfg, cfg.epsilon, threads, nodes=nodes)
        rr = _radius_rows(cfg, radii)
        errs = [r[3] for r in rr if not math.isnan(r[3])]
        h = float(np.min(traj.final.h))
        rows.append((n, h, max(errs) if errs else math.nan, traj.n_steps))
    run.write_csv("sweep.csv", ["nodes", "h", "max_rel_err", "steps"], rows)


def _sweep_dt(run: Run, cfg: ExperimentConfig, threads: int) -> None:
    from . import sde_engine

    sw = cfg.sweep
    frame = _control_frame(cfg)
    x = np.zeros(cfg.dim) if sw.point is None else np.array(sw.point)
    a = np.ones(frame.nfields) if sw.direction is None else np.array(sw.direction)
    if a.size != frame.nfields:
        raise ConfigError(f"sweep.direction needs {frame.nfields} entries")
    phi = sde_engine.smooth_test_function(cfg.dim)
    res = sde_engine.generator_consistency(frame, phi, x, a, sw.values, sw.K, cfg.seed, threads)
    orders = list(res.orders)
    rows = [(dt, err, se, orders[i - 1] if i > 0 else math.nan) for i, (dt, err, se) in enumerate(zip(res.dts, res.errors, res.stderrs))]
    run.write_csv("sweep.csv", ["dt", "weak_error", "stderr", "observed_order"], rows)
    run.derived.update(generator=res.generator, drift_mean=res.drift_mean, K=sw.K)
    if cfg.tolerance.order is not None and orders:
        run.check(min(orders) >= cfg.tolerance.order, f"observed weak order {min(orders):.4f} >= {cfg.tolerance.order}")


def _sweep_value(run: Run, cfg: ExperimentConfig, threads: int) -> None:
    from . import value_engine

    _need(cfg, "value", "cost")
    vs = cfg.value
    if not vs.points:
        raise ConfigError("value.points must list at least one point")
    frame = _control_frame(cfg)
    cost = cfg.terminal_cost()
    family = _family(cfg, frame, cost)
    x = np.array(vs.points[0])
    rows = []
    if cfg.sweep.axis == "p":
        res = value_engine.estimate_values(frame, cost, vs.t, x, cfg.sweep.values, family, cfg.control.budget,
                                           vs.K, cfg.seed, vs.T, vs.dt, threads)
        for p in cfg.sweep.values:
            e = res.estimates[float(p)]
            rows.append((_p_label(p), e.estimate, e.stderr, e.policy_id))
        run.write_csv("sweep.csv", ["p", "estimate", "stderr", "policy_id"], rows)
        run.check(_monotone_in_p(res.estimates), "estimates nondecreasing in p")
    else:
        for K in cfg.sweep.values:
            res = value_engine.estimate_values(frame, cost, vs.t, x, vs.p, family, cfg.control.budget, K,
                                               cfg.seed, vs.T, vs.dt, threads)
            for p in sorted(res.estimates):
                e = res.estimates[p]
                rows.append((K, _p_label(p), e.estimate, e.stderr, e.policy_id))
        run.write_csv("sweep.csv", ["K", "p", "estimate", "stderr", "policy_id"], rows)


def _sweep_directions(run: Run, cfg: ExperimentConfig) -> None:
    from . import value_engine
    from .linalg import jacobi_eigh

    eframe = cfg.eps_frame()
    rng = np.random.default_rng(cfg.seed)
    cases = [_random_case(rng, cfg.dim) for _ in range(cfg.check.cases)]
    rows = []
    for n in cfg.sweep.values:
        errs = []
        for x, p, S in cases:
            bf = value_engine.hamiltonian_H_eps(eframe, x, p, S, n, refine=0).value
            errs.append(abs(bf - _closed_form_H(eframe, x, p, S, jacobi_eigh)))
        rows.append((n, max(errs), float(np.mean(errs))))
    run.write_csv("sweep.csv", ["directions", "max_abs_err", "mean_abs_err"], rows)


def _closed_form_H(frame, x, p, S, eigh) -> float:
    X = frame.matrix(np.asarray(x, dtype=float))
    B = X @ S @ X.T - frame.connection_matrix(x, p)
    B = 0.5 * (B + B.T)
    return float(-np.trace(B) + eigh(B)[0][-1])


# --- property suites ---------------------------------------------------------


def run_check(cfg: ExperimentConfig, out, threads: int = 1) -> RunResult:
    from . import checks

    spec = cfg.check
    with open_run("check", cfg, out, threads) as run:
        summary = []
        for suite in spec.suites:
            with run.stage(suite):
                header, rows, verdicts = checks.SUITES[suite](cfg, threads)
            run.write_csv(f"check_{suite.replace('-', '_')}.csv", header, rows)
            for ok, message in verdicts:
                run.check(ok, f"{suite}: {message}")
                summary.append((suite, ok, message))
        run.write_csv("check_summary.csv", ["suite", "passed", "detail"], [(s, ok, m.replace(",", ";")) for s, ok, m in summary])
    return run.result


COMMANDS = {
    "pde": run_pde,
    "simulate": run_simulate,
    "value": run_value,
    "compare": run_compare,
    "sweep": run_sweep,
    "check": run_check,
}
