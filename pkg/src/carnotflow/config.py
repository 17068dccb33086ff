"""Experiment configuration: a TOML document parsed into frozen dataclasses.

Parsing is strict: unknown keys and sections are errors, and every numeric
field is range-checked before anything runs. See README for the grammar.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli

from . import costs, frames

SECTIONS = ("grid", "time", "cost", "control", "value", "simulate", "sweep", "check", "tolerance", "output")
SWEEP_AXES = ("epsilon", "p", "dt", "h", "K", "directions")
CHECK_SUITES = ("frames", "levelset", "hamiltonian", "lambda-max", "value-lemmas", "weak-order")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    bounds: tuple
    nodes: tuple


@dataclass(frozen=True)
class TimeSpec:
    T: float = 0.0
    dt: float | None = None
    snapshot_every: float | None = None
    steps: int | None = None


@dataclass(frozen=True)
class CostSpec:
    name: str = "cylinder"
    radius: float = 1.0
    cap: float = 10.0
    axis: int = 0
    center: tuple | None = None
    value: float = 0.0

    def build(self, dim: int) -> costs.TerminalCost:
        if self.name in ("sphere", "cylinder"):
            return costs.make_cost(self.name, radius=self.radius, cap=self.cap)
        if self.name == "plane":
            return costs.plane(self.axis, self.cap)
        if self.name == "clamped-distance":
            center = self.center if self.center is not None else (0.0,) * dim
            if len(center) != dim:
                raise ConfigError(f"cost.center needs {dim} coordinates")
            return costs.clamped_distance(center, self.cap)
        return costs.constant(self.value)


@dataclass(frozen=True)
class ControlSpec:
    family: str = "feedback"
    directions: int | None = None
    budget: int | None = None
    budgets: tuple = ()
    mode: str = "controlled-eps"


@dataclass(frozen=True)
class ValueSpec:
    t: float = 0.0
    T: float = 1.0
    dt: float = 1e-2
    K: int = 1000
    p: tuple = (2.0, 4.0, 8.0, math.inf)
    points: tuple = ()


@dataclass(frozen=True)
class SimulateSpec:
    kind: str = "horizontal-bm"
    x0: tuple | None = None
    t: float = 0.0
    T: float = 1.0
    dt: float = 1e-3
    K: int = 1000
    record_every: int = 0
    dump_paths: bool = False
    policy: str = "constant"
    direction: tuple | None = None


@dataclass(frozen=True)
class SweepSpec:
    axis: str = "epsilon"
    values: tuple = ()
    point: tuple | None = None
    direction: tuple | None = None
    K: int = 10000


@dataclass(frozen=True)
class CheckSpec:
    suites: tuple = CHECK_SUITES
    cases: int = 100
    directions: int | None = None
    refine: int = 3
    K: int = 2000
    T: float = 0.1
    dt: float = 1e-2
    points: int = 10
    p: tuple = (2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class ToleranceSpec:
    radius: float | None = None
    radius_window: tuple | None = None
    stationary: float | None = None
    spread: float | None = None
    levy: float | None = None
    order: float | None = None
    hamiltonian: float | None = None
    lambda_max: float | None = None
    compare: float | None = None


@dataclass(frozen=True)
class OutputSpec:
    snapshots: str = "all"


@dataclass(frozen=True)
class ExperimentConfig:
    frame: str
    dim: int
    epsilon: float = 1.0
    seed: int = 0
    table: tuple | None = None
    grid: GridSpec | None = None
    time: TimeSpec = field(default_factory=TimeSpec)
    cost: CostSpec = field(default_factory=CostSpec)
    control: ControlSpec = field(default_factory=ControlSpec)
    value: ValueSpec = field(default_factory=ValueSpec)
    simulate: SimulateSpec = field(default_factory=SimulateSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    check: CheckSpec = field(default_factory=CheckSpec)
    tolerance: ToleranceSpec = field(default_factory=ToleranceSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    present: tuple = ()
    source: str = ""

    def base_frame(self) -> frames.Frame:
        return frames.make_frame(self.frame, self.dim, self.table)

    def eps_frame(self, epsilon: float | None = None) -> frames.EpsilonFrame:
        return frames.EpsilonFrame(self.base_frame(), self.epsilon if epsilon is None else epsilon)

    def terminal_cost(self) -> costs.TerminalCost:
        return self.cost.build(self.dim)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed)

    def has(self, section: str) -> bool:
        return section in self.present


# --- field coercion ----------------------------------------------------------


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number")
    v = float(v)
    if math.isnan(v):
        raise ConfigError(f"{where} must not be NaN")
    return v


def _pos(v, where: str) -> float:
    v = _num(v, where)
    if not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{where} must be positive and finite")
    return v


def _int(v, where: str, lo: int = 1) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer")
    if v < lo:
        raise ConfigError(f"{where} must be at least {lo}")
    return v


def _vec(v, where: str, n: int | None = None) -> tuple:
    if not isinstance(v, list):
        raise ConfigError(f"{where} must be a list of numbers")
    out = tuple(_num(c, f"{where}[{i}]") for i, c in enumerate(v))
    if n is not None and len(out) != n:
        raise ConfigError(f"{where} needs {n} entries")
    return out


def _choice(v, where: str, options) -> str:
    if v not in options:
        raise ConfigError(f"{where} must be one of {', '.join(map(str, options))}")
    return v


def _exponent(v, where: str) -> float:
    if v == "inf":
        return math.inf
    p = _num(v, where)
    if not p > 1:
        raise ConfigError(f"{where} must exceed 1 (or be \"inf\")")
    return p


def _take(data: dict, where: str, allowed) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    return data


def _grid(d: dict, dim: int) -> GridSpec:
    _take(d, "grid", ("bounds", "nodes"))
    if "bounds" not in d or "nodes" not in d:
        raise ConfigError("[grid] needs bounds and nodes")
    b = d["bounds"]
    if not isinstance(b, list) or len(b) != dim:
        raise ConfigError(f"grid.bounds needs {dim} [lo, hi] pairs")
    bounds = tuple(_vec(pair, f"grid.bounds[{k}]", 2) for k, pair in enumerate(b))
    for k, (lo, hi) in enumerate(bounds):
        if not hi > lo:
            raise ConfigError(f"grid.bounds[{k}] must satisfy lo < hi")
    n = d["nodes"]
    nodes = (n,) * dim if isinstance(n, int) and not isinstance(n, bool) else n
    if not isinstance(nodes, (list, tuple)) or len(nodes) != dim:
        raise ConfigError(f"grid.nodes must be an integer or a list of {dim}")
    return GridSpec(bounds, tuple(_int(v, "grid.nodes", 3) for v in nodes))


def _time(d: dict) -> TimeSpec:
    _take(d, "time", ("T", "dt", "snapshot_every", "steps"))
    T = _num(d.get("T", 0.0), "time.T")
    if T < 0:
        raise ConfigError("time.T must be non-negative")
    dt = d.get("dt", "auto")
    dt = None if dt == "auto" else _pos(dt, "time.dt")
    snap = d.get("snapshot_every")
    snap = None if snap is None else _pos(snap, "time.snapshot_every")
    steps = d.get("steps")
    steps = None if steps is None else _int(steps, "time.steps", 0)
    if steps is not None and dt is None:
        raise ConfigError("time.steps needs an explicit time.dt")
    return TimeSpec(T, dt, snap, steps)


def _cost(d: dict, dim: int) -> CostSpec:
    _take(d, "cost", ("name", "radius", "cap", "axis", "center", "value"))
    name = _choice(d.get("name", "cylinder"), "cost.name", costs.BUILTINS)
    if name == "cylinder" and dim < 2:
        raise ConfigError("the cylinder cost needs at least two coordinates")
    axis = _int(d.get("axis", dim), "cost.axis", 1)
    if axis > dim:
        raise ConfigError(f"cost.axis must be between 1 and {dim}")
    center = d.get("center")
    return CostSpec(
        name,
        _pos(d.get("radius", 1.0), "cost.radius"),
        _pos(d.get("cap", 10.0), "cost.cap"),
        axis - 1,
        None if center is None else _vec(center, "cost.center", dim),
        _num(d.get("value", 0.0), "cost.value"),
    )


def _control(d: dict) -> ControlSpec:
    _take(d, "control", ("family", "directions", "budget", "budgets", "mode"))
    fam = _choice(d.get("family", "feedback"), "control.family", ("feedback", "constant"))
    dirs = d.get("directions")
    budget = d.get("budget")
    budgets = d.get("budgets", [])
    if not isinstance(budgets, list):
        raise ConfigError("control.budgets must be a list")
    bl = tuple(_int(b, "control.budgets") for b in budgets)
    if list(bl) != sorted(set(bl)):
        raise ConfigError("control.budgets must be strictly increasing")
    spec = ControlSpec(
        fam,
        None if dirs is None else _int(dirs, "control.directions"),
        None if budget is None else _int(budget, "control.budget"),
        bl,
        _choice(d.get("mode", "controlled-eps"), "control.mode", ("controlled-eps", "controlled-sub")),
    )
    if spec.budget is not None and bl and bl[-1] > spec.budget:
        raise ConfigError("control.budgets may not exceed control.budget")
    return spec


def _exponents(v, where: str) -> tuple:
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where} must be a nonempty list")
    return tuple(_exponent(p, f"{where}[{i}]") for i, p in enumerate(v))


def _points(v, where: str, dim: int) -> tuple:
    if not isinstance(v, list):
        raise ConfigError(f"{where} must be a list of points")
    return tuple(_vec(pt, f"{where}[{i}]", dim) for i, pt in enumerate(v))


def _value(d: dict, dim: int) -> ValueSpec:
    _take(d, "value", ("t", "T", "dt", "K", "p", "points"))
    spec = ValueSpec(
        _num(d.get("t", 0.0), "value.t"),
        _num(d.get("T", 1.0), "value.T"),
        _pos(d.get("dt", 1e-2), "value.dt"),
        _int(d.get("K", 1000), "value.K"),
        _exponents(d.get("p", [2, 4, 8, "inf"]), "value.p"),
        _points(d.get("points", []), "value.points", dim),
    )
    if spec.t > spec.T:
        raise ConfigError("value.t must not exceed value.T")
    if spec.t < spec.T and spec.dt > spec.T - spec.t:
        raise ConfigError("value.dt exceeds the horizon value.T - value.t")
    return spec


def _simulate(d: dict, dim: int) -> SimulateSpec:
    _take(d, "simulate", ("kind", "x0", "t", "T", "dt", "K", "record_every", "dump_paths", "policy", "direction"))
    x0 = d.get("x0")
    direction = d.get("direction")
    dump = d.get("dump_paths", False)
    if not isinstance(dump, bool):
        raise ConfigError("simulate.dump_paths must be true or false")
    spec = SimulateSpec(
        _choice(d.get("kind", "horizontal-bm"), "simulate.kind", ("horizontal-bm", "controlled")),
        None if x0 is None else _vec(x0, "simulate.x0", dim),
        _num(d.get("t", 0.0), "simulate.t"),
        _num(d.get("T", 1.0), "simulate.T"),
        _pos(d.get("dt", 1e-3), "simulate.dt"),
        _int(d.get("K", 1000), "simulate.K"),
        _int(d.get("record_every", 0), "simulate.record_every", 0),
        dump,
        _choice(d.get("policy", "constant"), "simulate.policy", ("constant", "feedback")),
        None if direction is None else _vec(direction, "simulate.direction"),
    )
    if not spec.T > spec.t:
        raise ConfigError("simulate.T must exceed simulate.t")
    if spec.dt > spec.T - spec.t:
        raise ConfigError("simulate.dt exceeds the horizon")
    if dump and spec.record_every == 0:
        raise ConfigError("simulate.dump_paths needs simulate.record_every > 0")
    return spec


def _sweep(d: dict, dim: int) -> SweepSpec:
    _take(d, "sweep", ("axis", "values", "point", "direction", "K"))
    axis = _choice(d.get("axis", "epsilon"), "sweep.axis", SWEEP_AXES)
    vals = d.get("values", [])
    if not isinstance(vals, list) or not vals:
        raise ConfigError("sweep.values must be a nonempty list")
    if axis in ("h", "K", "directions"):
        values = tuple(_int(v, f"sweep.values[{i}]", 3 if axis == "h" else 1) for i, v in enumerate(vals))
    elif axis == "p":
        values = tuple(_exponent(v, f"sweep.values[{i}]") for i, v in enumerate(vals))
    else:
        values = tuple(_pos(v, f"sweep.values[{i}]") for i, v in enumerate(vals))
        if axis == "epsilon" and any(v > 1 for v in values):
            raise ConfigError("sweep epsilon values must lie in (0, 1]")
    point = d.get("point")
    direction = d.get("direction")
    return SweepSpec(
        axis,
        values,
        None if point is None else _vec(point, "sweep.point", dim),
        None if direction is None else _vec(direction, "sweep.direction"),
        _int(d.get("K", 10000), "sweep.K"),
    )


def _check(d: dict) -> CheckSpec:
    _take(d, "check", ("suites", "cases", "directions", "refine", "K", "T", "dt", "points", "p"))
    suites = d.get("suites", list(CHECK_SUITES))
    if not isinstance(suites, list) or not suites:
        raise ConfigError("check.suites must be a nonempty list")
    for s in suites:
        _choice(s, "check.suites entry", CHECK_SUITES)
    dirs = d.get("directions")
    spec = CheckSpec(
        tuple(suites),
        _int(d.get("cases", 100), "check.cases"),
        None if dirs is None else _int(dirs, "check.directions"),
        _int(d.get("refine", 3), "check.refine", 0),
        _int(d.get("K", 2000), "check.K"),
        _pos(d.get("T", 0.1), "check.T"),
        _pos(d.get("dt", 1e-2), "check.dt"),
        _int(d.get("points", 10), "check.points"),
        _exponents(d.get("p", [2, 4, 8, 16]), "check.p"),
    )
    if spec.dt > spec.T:
        raise ConfigError("check.dt exceeds check.T")
    return spec


def _tolerance(d: dict) -> ToleranceSpec:
    keys = [f.name for f in dataclasses.fields(ToleranceSpec)]
    _take(d, "tolerance", keys)
    kw: dict[str, Any] = {}
    for k in keys:
        if k not in d:
            continue
        if k == "radius_window":
            w = _vec(d[k], "tolerance.radius_window", 2)
            if not w[1] >= w[0]:
                raise ConfigError("tolerance.radius_window must be [t_lo, t_hi] with t_lo <= t_hi")
            kw[k] = w
        elif k == "order":
            kw[k] = _pos(d[k], "tolerance.order")
        else:
            kw[k] = _pos(d[k], f"tolerance.{k}")
    return ToleranceSpec(**kw)


def _table(raw, dim: int) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("custom frames need at least one [[field]] table")
    out = []
    for i, fld in enumerate(raw):
        _take(fld, f"field {i + 1}", ("terms",))
        terms = fld.get("terms", [])
        if not isinstance(terms, list):
            raise ConfigError(f"field {i + 1}: terms must be a list")
        comps = [[] for _ in range(dim)]
        for j, term in enumerate(terms):
            where = f"field {i + 1} term {j + 1}"
            if not (isinstance(term, list) and len(term) == 3):
                raise ConfigError(f"{where}: expected [component, [exponents], coefficient]")
            comp = _int(term[0], f"{where} component", 1)
            if comp > dim:
                raise ConfigError(f"{where}: component must be between 1 and {dim}")
            exps = term[1]
            if not (isinstance(exps, list) and len(exps) == dim):
                raise ConfigError(f"{where}: exponent vector needs {dim} entries")
            comps[comp - 1].append((tuple(_int(e, f"{where} exponent", 0) for e in exps), _num(term[2], f"{where} coefficient")))
        out.append(tuple(tuple(c) for c in comps))
    return tuple(out)


def parse(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    top = ("frame", "dim", "epsilon", "seed", "field") + SECTIONS
    _take(data, "top level", top)
    kind = _choice(data.get("frame", None), "frame", ("heisenberg1", "euclidean", "custom"))
    if kind == "heisenberg1":
        if data.get("dim", 3) != 3:
            raise ConfigError("heisenberg1 is three-dimensional")
        dim = 3
    else:
        if "dim" not in data:
            raise ConfigError(f"frame = \"{kind}\" needs dim")
        dim = _int(data["dim"], "dim")
    table = None
    if kind == "custom":
        table = _table(data.get("field"), dim)
    elif "field" in data:
        raise ConfigError("[[field]] tables are only allowed with frame = \"custom\"")
    eps = _num(data.get("epsilon", 1.0), "epsilon")
    if not 0 < eps <= 1:
        raise ConfigError("epsilon must lie in (0, 1]")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    kw: dict[str, Any] = {}
    present = tuple(s for s in SECTIONS if s in data)
    if "grid" in data:
        kw["grid"] = _grid(data["grid"], dim)
    if "time" in data:
        kw["time"] = _time(data["time"])
    if "cost" in data:
        kw["cost"] = _cost(data["cost"], dim)
    if "control" in data:
        kw["control"] = _control(data["control"])
    if "value" in data:
        kw["value"] = _value(data["value"], dim)
    if "simulate" in data:
        kw["simulate"] = _simulate(data["simulate"], dim)
    if "sweep" in data:
        kw["sweep"] = _sweep(data["sweep"], dim)
    if "check" in data:
        kw["check"] = _check(data["check"])
    if "tolerance" in data:
        kw["tolerance"] = _tolerance(data["tolerance"])
    if "output" in data:
        _take(data["output"], "output", ("snapshots",))
        kw["output"] = OutputSpec(_choice(data["output"].get("snapshots", "all"), "output.snapshots", ("all", "last", "none")))
    cfg = ExperimentConfig(
        "custom-polynomial" if kind == "custom" else kind, dim, eps, seed, table, present=present, source=text, **kw
    )
    try:
        cfg.base_frame()
    except (frames.FrameError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse(text)
