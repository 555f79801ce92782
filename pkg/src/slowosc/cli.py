"""Command-line front end.

Every command resolves a :class:`RunConfig` from an optional flat YAML file
and the command-line flags (flags win), runs, and writes its artifacts plus
``summary.json`` into ``out_dir``. Exit codes: 0 success, 1 numerical
non-convergence, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field

import yaml

from . import __version__
from .barriers import BudgetError, GenerationError, budget, eigencheck, eps0, generate_initial, membership
from .gurtin import GurtinConfig, asymptotic_demo, kernel_check
from .limit import sweep, write_sweep_csv
from .nonlinearity import ConfigurationError, NonlinearitySpec, from_tag, ricker, validate
from .oscillation import ConvergenceError, DivergenceError, classify, find_periodic
from .trajectory import (
    DomainError,
    InitialData,
    NonFiniteError,
    default_m,
    extend,
    fmt,
    make_grid,
    read_trajectory_csv,
    sup_bound_check,
    write_csv,
)

log = logging.getLogger("slowosc")

COMMANDS = ("validate", "simulate", "periodic", "sweep", "membership", "eigencheck", "eps0", "gurtin")

# flat config schema: key -> type
SCHEMA = {
    "command": str,
    "f": str,
    "slope": float,
    "eps": float,
    "m": int,
    "alpha": float,
    "horizon": float,
    "tol": float,
    "max_iter": int,
    "anderson": int,
    "seed": int,
    "out_dir": str,
    "b0": str,
    "eps_list": list,
    "interval": list,
    "workers": int,
    "input": str,
    "fprime0": float,
    "alpha_ricker": float,
    "mu": float,
    "x_clamp": float,
}

REQUIRED = {
    "validate": ("f",),
    "simulate": ("f", "eps", "horizon"),
    "periodic": ("f", "eps"),
    "sweep": ("f", "eps_list"),
    "membership": ("f", "input", "eps"),
    "eigencheck": ("eps", "fprime0", "m"),
    "eps0": ("fprime0",),
    "gurtin": ("alpha_ricker", "eps"),
}

DEFAULTS = {
    "tol": 1e-8,
    "max_iter": 500,
    "anderson": 0,
    "seed": 0,
    "out_dir": ".",
    "b0": "const:1",
    "interval": [1.25, 1.75],
    "mu": 0.0,
}


class UsageError(ValueError):
    """Bad configuration; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    nonlinearity: NonlinearitySpec | None = None
    eps_requested: float | None = None
    m: int | None = None
    alpha_override: float | None = None
    horizon: float | None = None
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0
    out_dir: str = "."
    anderson: int = 0
    b0: str = "const:1"
    eps_list: tuple = ()
    interval: tuple = (1.25, 1.75)
    workers: int | None = None
    input: str | None = None
    fprime0: float | None = None
    alpha_ricker: float | None = None
    mu: float = 0.0
    x_clamp: float | None = None
    f_tag: str | None = None
    slope: float | None = None

    def to_dict(self):
        """Deterministic echo (``out_dir`` lives in ``run_info.json``)."""
        d = {k.name: getattr(self, k.name) for k in dataclasses.fields(self)}
        d.pop("out_dir")
        d["nonlinearity"] = None if self.nonlinearity is None else self.nonlinearity.describe()
        d["eps_list"] = list(self.eps_list)
        d["interval"] = list(self.interval)
        return d


@dataclass
class RunSummary:
    command: str
    status: str
    exit_code: int
    config: dict
    grid: dict | None = None
    context: dict | None = None
    results: dict = field(default_factory=dict)
    reason: str | None = None
    warnings: list = field(default_factory=list)
    version: str = __version__
    wall_time: float | None = None

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        d = self.to_dict()
        d.pop("wall_time")
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text, wall_time=None):
        d = json.loads(text)
        d["wall_time"] = wall_time
        return cls.from_dict(d)

    def write(self, out_dir):
        """``summary.json`` is deterministic; timing goes to ``run_info.json``."""
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        info = {"version": self.version, "wall_time": self.wall_time, "out_dir": os.path.abspath(out_dir)}
        with open(os.path.join(out_dir, "run_info.json"), "w", encoding="utf-8") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, out_dir):
        with open(os.path.join(out_dir, "run_info.json"), encoding="utf-8") as fh:
            info = json.load(fh)
        with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as fh:
            return cls.from_json(fh.read(), wall_time=info.get("wall_time"))


# -- configuration ---------------------------------------------------------

def _floats(value, key):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        raise UsageError(f"{key}: expected a list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected a list of numbers, got {value!r}") from None


def _coerce(key, value):
    kind = SCHEMA[key]
    if value is None:
        return None
    if kind is list:
        return _floats(value, key)
    if kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise UsageError(f"{key}: expected an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise UsageError(f"{key}: expected an integer, got {value!r}") from None
    if kind is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise UsageError(f"{key}: expected a number, got {value!r}") from None
    return str(value)


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not well-formed: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must be a flat key-value mapping")
    unknown = sorted(set(doc) - set(SCHEMA))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(map(str, unknown))}")
    for k, v in doc.items():
        if isinstance(v, dict):
            raise UsageError(f"{k}: nested values are not allowed")
    return doc


def parse_config(file_values, flag_values):
    """Merge file and flag values into a validated :class:`RunConfig`."""
    merged = {}
    for k, v in file_values.items():
        merged[k] = _coerce(k, v)
    for k, v in flag_values.items():
        if v is None:
            continue
        v = _coerce(k, v)
        if k in merged and merged[k] != v:
            log.warning("flag %s=%r overrides config value %r", k, v, merged[k])
        merged[k] = v
    command = merged.get("command")
    if command is None:
        raise UsageError("missing required field: command")
    if command not in COMMANDS:
        raise UsageError(f"command: unknown command {command!r}")
    for key in REQUIRED[command]:
        if merged.get(key) is None:
            raise UsageError(f"missing required field: {key}")
    for k, v in DEFAULTS.items():
        merged.setdefault(k, v)
        if merged[k] is None:
            merged[k] = v

    spec = None
    try:
        if command == "gurtin":
            spec = ricker(merged["alpha_ricker"])
        elif merged.get("f") is not None:
            params = {}
            if merged.get("slope") is not None:
                params["slope"] = merged["slope"]
            if merged.get("alpha_ricker") is not None:
                params["alpha"] = merged["alpha_ricker"]
            spec = from_tag(merged["f"], **params)
    except ConfigurationError as exc:
        raise UsageError(f"f: {exc}") from None

    eps = merged.get("eps")
    if eps is not None and not 0.0 < eps < 1.0:
        raise UsageError("eps: must lie in (0, 1)")
    if merged.get("m") is not None and merged["m"] < 1:
        raise UsageError("m: must be a positive integer")
    if merged["tol"] <= 0:
        raise UsageError("tol: must be positive")
    if merged["max_iter"] < 1:
        raise UsageError("max_iter: must be positive")
    if merged.get("horizon") is not None and merged["horizon"] < 0:
        raise UsageError("horizon: must be non-negative")
    interval = tuple(merged["interval"])
    if len(interval) != 2:
        raise UsageError("interval: expected lo,hi")
    eps_list = tuple(merged.get("eps_list") or ())
    if command == "sweep" and not eps_list:
        raise UsageError("missing required field: eps_list")

    out_dir = merged["out_dir"]
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"out_dir: {exc}") from None
    if not os.access(out_dir, os.W_OK):
        raise UsageError(f"out_dir: {out_dir} is not writable")

    return RunConfig(
        command=command,
        nonlinearity=spec,
        eps_requested=eps,
        m=merged.get("m"),
        alpha_override=merged.get("alpha"),
        horizon=merged.get("horizon"),
        tol=merged["tol"],
        max_iter=merged["max_iter"],
        seed=merged["seed"],
        out_dir=out_dir,
        anderson=merged["anderson"],
        b0=merged["b0"],
        eps_list=eps_list,
        interval=interval,
        workers=merged.get("workers"),
        input=merged.get("input"),
        fprime0=merged.get("fprime0"),
        alpha_ricker=merged.get("alpha_ricker"),
        mu=merged["mu"],
        x_clamp=merged.get("x_clamp"),
        f_tag=merged.get("f"),
        slope=merged.get("slope"),
    )


def parse_b0(text):
    """``const[:v]`` or ``generator:tau=..,factor=..[,seed=..]``."""
    kind, _, rest = text.partition(":")
    if kind == "const":
        try:
            return "const", {"value": float(rest) if rest else 1.0}
        except ValueError:
            raise UsageError(f"b0: bad constant {rest!r}") from None
    if kind == "generator":
        out = {}
        for item in filter(None, rest.split(",")):
            k, _, v = item.partition("=")
            if k not in ("tau", "factor", "seed"):
                raise UsageError(f"b0: unknown generator key {k!r}")
            try:
                out[k] = int(v) if k == "seed" else float(v)
            except ValueError:
                raise UsageError(f"b0: bad value for {k}: {v!r}") from None
        if "tau" not in out:
            raise UsageError("b0: generator needs tau=")
        return "generator", out
    raise UsageError(f"b0: expected const[:v] or generator:tau=..., got {text!r}")


# -- commands --------------------------------------------------------------

def _grid(cfg, eps=None):
    eps = cfg.eps_requested if eps is None else eps
    return make_grid(eps, cfg.m or default_m(eps))


def _context_or_none(spec, grid):
    try:
        return budget(validate(spec), grid)
    except (BudgetError, ConfigurationError) as exc:
        log.info("no barrier context: %s", exc)
        return None


def _cmd_validate(cfg, s):
    rep = validate(cfg.nonlinearity)
    s.results = rep.to_dict()
    print(f"passed={rep.passed} fprime0={fmt(rep.fprime0)}")
    return 0


def _initial_data(cfg, grid, s):
    kind, opts = parse_b0(cfg.b0)
    if kind == "const":
        return InitialData.constant(grid, opts["value"])
    try:
        ctx = budget(validate(cfg.nonlinearity), grid)
    except (BudgetError, ConfigurationError) as exc:
        raise UsageError(f"b0: generator needs a feasible budget: {exc}") from None
    if cfg.alpha_override is not None:
        ctx = dataclasses.replace(ctx, alpha=cfg.alpha_override)
    s.context = ctx.to_dict()
    seed = opts.get("seed", cfg.seed)
    try:
        return generate_initial(ctx, opts["tau"], opts.get("factor", 1.5), seed=seed)
    except ValueError as exc:
        raise UsageError(f"b0: {exc}") from None


def _cmd_simulate(cfg, s):
    g = _grid(cfg)
    s.grid = g.to_dict()
    b0 = _initial_data(cfg, g, s)
    horizon = round(cfg.horizon * g.steps_per_unit) / g.steps_per_unit
    traj = extend(b0, cfg.nonlinearity, horizon)
    traj.to_csv(os.path.join(cfg.out_dir, "trajectory.csv"))
    res = {"horizon": horizon, "sup": float(max(abs(traj.samples).max(), abs(traj.jump_at_zero[0])))}
    if s.context is not None:
        res["bounded_by_R"] = sup_bound_check(traj, s.context["R"])
    if horizon >= 3.0:
        v = classify(traj, g.eps, (0.0, horizon))
        res.update(
            slowly_oscillating=v.slowly_oscillating,
            zero_count=v.zero_count,
            min_gap=v.min_gap,
            failures=[list(map(str, f)) for f in v.failures[:20]],
        )
    s.results = res
    print(f"wrote trajectory.csv ({traj.samples.size} nodes)")
    return 0


def _cmd_periodic(cfg, s):
    g = _grid(cfg)
    s.grid = g.to_dict()
    ctx = _context_or_none(cfg.nonlinearity, g)
    s.context = None if ctx is None else ctx.to_dict()
    b0 = _initial_data(cfg, g, s)
    orbit = find_periodic(b0, cfg.nonlinearity, tol=cfg.tol, max_iter=cfg.max_iter, anderson=cfg.anderson)
    s.results = orbit.summary()
    if not orbit.degenerate:
        orbit.to_csv(os.path.join(cfg.out_dir, "orbit.csv"))
        orbit.continuation.to_csv(os.path.join(cfg.out_dir, "trajectory.csv"))
    orbit.to_json(os.path.join(cfg.out_dir, "orbit.json"))
    print(f"period={fmt(s.results['period'])} residual={fmt(orbit.residual)} iterations={orbit.iterations}")
    return 0


def _cmd_sweep(cfg, s):
    # a picklable builder so rows can go to worker processes
    rows, orbits = sweep(
        cfg.nonlinearity,
        cfg.eps_list,
        interval=cfg.interval,
        ctx_builder=_SweepBuilder(cfg.m),
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        workers=cfg.workers,
    )
    write_sweep_csv(os.path.join(cfg.out_dir, "sweep.csv"), rows)
    for row, orbit in zip(rows, orbits):
        if orbit is not None and not orbit.degenerate:
            orbit.to_csv(os.path.join(cfg.out_dir, f"orbit_eps={row.eps:.6g}.csv"))
    s.results = {"rows": [dataclasses.asdict(r) for r in rows]}
    failed = [r for r in rows if not r.converged]
    for r in rows:
        print(f"eps={fmt(r.eps)} sup_error={fmt(r.sup_error_on_I)} l1_error={fmt(r.l1_error)}")
    if failed:
        s.reason = "; ".join(f"eps={fmt(r.eps)}: {r.message}" for r in failed)
        return 1
    return 0


@dataclass(frozen=True)
class _SweepBuilder:
    m: int | None

    def __call__(self, eps):
        g = make_grid(eps, self.m or default_m(eps))
        return g, InitialData.constant(g, 1.0)


def _cmd_membership(cfg, s):
    g = _grid(cfg)
    s.grid = g.to_dict()
    try:
        traj = read_trajectory_csv(cfg.input, g)
    except (OSError, ValueError) as exc:
        raise UsageError(f"input: {exc}") from None
    try:
        data = traj.segment(0.0)
    except (DomainError, ValueError) as exc:
        raise UsageError(f"input: does not cover [-1-eps/2, 0]: {exc}") from None
    try:
        ctx = budget(validate(cfg.nonlinearity), g)
    except (BudgetError, ConfigurationError) as exc:
        raise UsageError(f"f: {exc}") from None
    if cfg.alpha_override is not None:
        ctx = dataclasses.replace(ctx, alpha=cfg.alpha_override)
    s.context = ctx.to_dict()
    rep = membership(data, ctx)
    s.results = dataclasses.asdict(rep)
    s.results["reasons"] = list(rep.reasons)
    print(f"member={rep.member} in_invariant_set={rep.in_invariant_set} tau={fmt(rep.tau)}")
    return 0


def _cmd_eigencheck(cfg, s):
    g = _grid(cfg)
    s.grid = g.to_dict()
    r = eigencheck(cfg.eps_requested, cfg.fprime0, cfg.m)
    s.results = {"residual": r}
    print(fmt(r))
    return 0


def _cmd_eps0(cfg, s):
    try:
        v = eps0(cfg.fprime0)
    except ConfigurationError as exc:
        raise UsageError(f"fprime0: {exc}") from None
    s.results = {"eps0": v}
    print(fmt(v))
    return 0


def _cmd_gurtin(cfg, s):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            gc = GurtinConfig.build(ricker(cfg.alpha_ricker), mu=cfg.mu, eps=cfg.eps_requested, x_clamp=cfg.x_clamp)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        res = asymptotic_demo(gc, horizon=cfg.horizon, m=cfg.m, tol=min(cfg.tol, 1e-10), max_iter=cfg.max_iter)
    s.warnings = [str(w.message) for w in caught]
    s.grid = res.orbit.segment.grid.to_dict()
    s.context = gc.to_dict()
    s.results = res.summary()
    s.results["kernel_check"] = kernel_check(gc.mu, gc.eps, m=cfg.m)
    d = cfg.out_dir
    res.orbit.to_csv(os.path.join(d, "orbit.csv"))
    res.birth.to_csv(os.path.join(d, "trajectory.csv"))
    res.total.to_csv(os.path.join(d, "total.csv"))
    for t, ages, u in res.snapshots:
        write_csv(os.path.join(d, f"density_t={fmt(t)}.csv"), ("a", "u"), zip(ages, u))
    s.results["snapshot_times"] = [t for t, _, _ in res.snapshots]
    print(f"period={fmt(res.orbit.period)} b_residual={fmt(res.b_residual)} clamp_active={res.clamp_active}")
    return 0


_HANDLERS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "periodic": _cmd_periodic,
    "sweep": _cmd_sweep,
    "membership": _cmd_membership,
    "eigencheck": _cmd_eigencheck,
    "eps0": _cmd_eps0,
    "gurtin": _cmd_gurtin,
}


def run(cfg: RunConfig) -> int:
    """Execute ``cfg`` and always leave a ``summary.json`` behind."""
    s = RunSummary(command=cfg.command, status="ok", exit_code=0, config=cfg.to_dict())
    start = time.perf_counter()
    try:
        code = _HANDLERS[cfg.command](cfg, s)
    except UsageError as exc:
        log.error("%s", exc)
        s.reason, code = str(exc), 2
    except (ConvergenceError, DivergenceError, NonFiniteError, GenerationError) as exc:
        log.error("%s", exc)
        s.reason, code = f"{type(exc).__name__}: {exc}", 1
    s.exit_code = code
    s.status = {0: "ok", 1: "non-convergence", 2: "usage-error"}[code]
    s.wall_time = time.perf_counter() - start
    s.write(cfg.out_dir)
    return code


# -- argument parsing ------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat YAML file; flags override its values")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def _f_args(p):
    p.add_argument("--f", help="catalog tag: atan-shifted, odd-sine-clipped, asymmetric-sine-clipped, linear, ricker")
    p.add_argument("--slope", type=float, help="slope for --f linear")


def build_parser():
    ap = argparse.ArgumentParser(prog="slowosc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the negative-feedback assumption")
    _f_args(p)
    _common(p)

    p = sub.add_parser("simulate", help="continue initial data to a horizon")
    _f_args(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--b0", help="const[:v] or generator:tau=..,factor=..[,seed=..]")
    p.add_argument("--alpha", type=float, help="override the budget alpha")
    _common(p)

    p = sub.add_parser("periodic", help="fixed point of the return map")
    _f_args(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--anderson", type=int, help="Anderson mixing depth (0 = plain iteration)")
    p.add_argument("--b0")
    _common(p)

    p = sub.add_parser("sweep", help="square-wave errors over decreasing eps")
    _f_args(p)
    p.add_argument("--eps-list", dest="eps_list", help="comma separated, strictly decreasing")
    p.add_argument("--interval", help="lo,hi")
    p.add_argument("--m", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--workers", type=int)
    _common(p)

    p = sub.add_parser("membership", help="certify initial data from a t,x CSV")
    _f_args(p)
    p.add_argument("--input")
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--m", type=int)
    _common(p)

    p = sub.add_parser("eigencheck", help="discrete eigen-identity residual")
    p.add_argument("--eps", type=float)
    p.add_argument("--fprime0", type=float)
    p.add_argument("--m", type=int)
    _common(p)

    p = sub.add_parser("eps0", help="threshold eps0 for a slope f'(0) < -2")
    p.add_argument("--fprime0", type=float)
    _common(p)

    p = sub.add_parser("gurtin", help="Ricker population model reduction")
    p.add_argument("--alpha-ricker", dest="alpha_ricker", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--x-clamp", dest="x_clamp", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    _common(p)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "log_level") and k in SCHEMA}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        if file_values.get("command", args.command) != args.command:
            log.warning("command %r overrides config command %r", args.command, file_values["command"])
        cfg = parse_config(file_values, flags)
    except UsageError as exc:
        print(f"slowosc: error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
