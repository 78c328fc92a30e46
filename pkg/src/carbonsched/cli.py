"""Command line: simulate, sweep, fit, gen-trace, validate.

Settings come from built-in defaults, then a --config file (YAML or JSON
with RunConfig key names), then command-line flags; later sources win.
Exit status is 0 on success, 2 for bad input, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import fmt
from .catalog import Catalog, CatalogError, bundled, load_catalog, load_intensity_csv
from .engine import SimConfig, SimResult, SimulationInvariantError, run
from .hardware import REFERENCE_INTENSITY, CarbonIntensitySeries, DomainError
from .provenance import InsufficientSamplesError, RankDeficientError, fit_model, read_telemetry_csv
from .scheduler import POLICIES
from .workload import TraceParseError, TraceValidationError, audit_trace, generate_trace, load_trace, save_trace, trace_spec_from_dict

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
OUTDIR_ENV = "CARBONSCHED_OUTDIR"
DEFAULT_OUTDIR = "carbonsched-out"
SOLVERS = ("exact", "heuristic")
SWEEP_AXES = ("deadline", "intensity", "policy")


class InputError(Exception):
    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class RunConfig:
    trace: Optional[str] = None
    trace_spec: Optional[str] = None
    catalog: Optional[str] = None
    intensity: Optional[str] = None
    policy: str = "mufunction"
    window_length_us: int = 1000
    solver: str = "exact"
    sla_mode: str = "hard"
    penalty_j_per_us: float = 1e-6
    idle_mode: str = "proportional"
    seed: int = 0
    output_dir: Optional[str] = None
    horizon_us: int = 0
    power_gating: bool = False
    deadline_scale: float = 1.0
    deferral: str = "carbon"
    cold_start_us: int = 125_000
    record_wall_time: bool = False

    @property
    def policy_name(self) -> str:
        # "mufunction" picks the windowed policy matching the solver mode
        return f"mufunction-{self.solver}" if self.policy == "mufunction" else self.policy

    def sim_config(self) -> SimConfig:
        return SimConfig(
            window_us=self.window_length_us,
            sla_mode=self.sla_mode,
            penalty_j_per_us=self.penalty_j_per_us,
            idle_mode=self.idle_mode,
            horizon_us=self.horizon_us,
            power_gating=self.power_gating,
            cold_start_us=self.cold_start_us,
            deadline_scale=self.deadline_scale,
            deferral=self.deferral,
            record_wall_time=self.record_wall_time,
        )

    def problems(self) -> list[str]:
        out = []
        if self.trace is None and self.trace_spec is None:
            out.append("no trace: give --trace or --trace-spec")
        for name in ("trace", "trace_spec", "catalog", "intensity"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                out.append(f"{name} file not found: {p}")
        if self.policy != "mufunction" and self.policy not in POLICIES:
            out.append(f"unknown policy {self.policy!r}; valid policies: mufunction, {', '.join(POLICIES)}")
        if self.solver not in SOLVERS:
            out.append(f"solver must be one of {SOLVERS}")
        try:
            self.sim_config()
        except DomainError as e:
            out.append(str(e))
        return out


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}
_PATH_KEYS = ("trace", "trace_spec", "catalog", "intensity", "output_dir")


def _coerce(key: str, value):
    default = getattr(RunConfig(), key)
    if value is None:
        return None
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ValueError
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise InputError(f"config key {key!r} has invalid value {value!r}") from None
    return str(value)


def load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {path}", path)
    try:
        data = json.loads(p.read_text()) if p.suffix == ".json" else yaml.safe_load(p.read_text())
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InputError(f"cannot parse config {path}: {e}", path) from None
    data = data or {}
    if not isinstance(data, dict):
        raise InputError(f"config {path} must be a mapping", path)
    unknown = sorted(set(data) - set(_CONFIG_TYPES))
    if unknown:
        raise InputError(f"config {path}: unknown keys {unknown}; valid keys: {sorted(_CONFIG_TYPES)}", path)
    out = {k: _coerce(k, v) for k, v in data.items()}
    for k in _PATH_KEYS:
        if out.get(k) is not None and not Path(out[k]).is_absolute():
            out[k] = str(p.parent / out[k])
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if getattr(args, "config", None):
        merged.update(load_config_file(args.config))
    for k in _CONFIG_TYPES:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    if merged.get("output_dir") is None:
        merged["output_dir"] = os.environ.get(OUTDIR_ENV) or DEFAULT_OUTDIR
    return RunConfig(**merged)


# -- loading -------------------------------------------------------------

def _catalog(cfg: RunConfig) -> Catalog:
    path = cfg.catalog or str(bundled("catalog.yaml"))
    try:
        return load_catalog(path)
    except CatalogError as e:
        raise InputError(f"catalog {path}: {e}", path) from None


def _series(path: Optional[str]) -> CarbonIntensitySeries:
    if path is None:
        return CarbonIntensitySeries.constant(REFERENCE_INTENSITY)
    try:
        return load_intensity_csv(path)
    except (DomainError, OSError) as e:
        raise InputError(f"intensity {path}: {e}", path) from None


def _load_spec(path: str, seed: Optional[int]):
    try:
        data = yaml.safe_load(Path(path).read_text())
        if seed is not None:
            data["seed"] = seed
        return trace_spec_from_dict(data)
    except (OSError, yaml.YAMLError, KeyError, TypeError, ValueError, AttributeError) as e:
        raise InputError(f"trace spec {path}: {e}", path) from None


def _trace(cfg: RunConfig):
    if cfg.trace is not None:
        try:
            return load_trace(cfg.trace)
        except (TraceParseError, TraceValidationError, OSError) as e:
            raise InputError(f"trace {cfg.trace}: {e}", cfg.trace) from None
    return generate_trace(_load_spec(cfg.trace_spec, cfg.seed))


def _checked(cfg: RunConfig) -> RunConfig:
    problems = cfg.problems()
    if problems:
        raise InputError("; ".join(problems))
    return cfg


def _simulate(cfg: RunConfig, horizon: Optional[int] = None) -> SimResult:
    catalog = _catalog(cfg)
    trace = _trace(cfg)
    bad = catalog.trace_problems(trace)
    if bad:
        raise InputError("; ".join(bad), cfg.trace)
    sc = cfg.sim_config()
    if horizon is not None:
        sc = replace(sc, horizon_us=horizon)
    return run(trace, catalog, cfg.policy_name, sc, _series(cfg.intensity))


# -- subcommands ---------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _checked(resolve_config(args))
    result = _simulate(cfg)
    paths = result.write(cfg.output_dir)
    for p in paths:
        print(p)
    return EXIT_OK


SWEEP_HEADER = [
    "index", "axis", "value", "policy", "total_energy_j", "total_carbon_g", "sla_violations", "horizon_us", "cost_j",
]


def _sweep_cfg(cfg: RunConfig, axis: str, value: str) -> RunConfig:
    if axis == "deadline":
        return replace(cfg, deadline_scale=float(value))
    if axis == "intensity":
        return replace(cfg, intensity=value)
    return replace(cfg, policy=value)


def _sweep_point(job) -> tuple[int, dict]:
    cfg_dict, axis, value, horizon = job
    cfg = _sweep_cfg(RunConfig(**cfg_dict), axis, value)
    m = _simulate(cfg, horizon).metrics
    return m.horizon_us, {
        "policy": m.policy,
        "total_energy_j": m.total_energy,
        "total_carbon_g": m.total_carbon,
        "sla_violations": m.sla_violations,
        "horizon_us": m.horizon_us,
    }


def _parse_values(axis: str, raw: Sequence[str]) -> list[str]:
    values = [v.strip() for chunk in raw for v in chunk.split(",") if v.strip()]
    if not values:
        raise InputError("sweep axis has no values")
    if axis == "deadline":
        try:
            scales = [float(v) for v in values]
        except ValueError:
            raise InputError(f"deadline scales must be numbers, got {values}") from None
        if any(s <= 0 for s in scales):
            raise InputError("deadline scales must be > 0")
        if scales != sorted(scales):
            raise InputError("deadline scales must be listed in ascending order")
    elif axis == "intensity":
        for v in values:
            if not Path(v).is_file():
                raise InputError(f"intensity file not found: {v}", v)
    else:
        bad = [v for v in values if v not in POLICIES and v != "mufunction"]
        if bad:
            raise InputError(f"unknown policies {bad}; valid policies: {', '.join(POLICIES)}")
    return values


def _map(jobs: list, n: int) -> list:
    if n <= 1 or len(jobs) <= 1:
        return [_sweep_point(j) for j in jobs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(_sweep_point, jobs))  # map keeps sweep order


def cmd_sweep(args) -> int:
    values = _parse_values(args.axis, args.values or [])
    cfg = _checked(resolve_config(args))
    if args.axis == "intensity":
        for v in values:
            _series(v)
    base = asdict(cfg)
    first = _map([(base, args.axis, v, None) for v in values], args.jobs)
    # every point over the longest horizon so idle and embodied terms line up
    H = max(h for h, _ in first)
    redo = [i for i, (h, _) in enumerate(first) if h != H]
    again = _map([(base, args.axis, values[i], H) for i in redo], args.jobs)
    rows = [r for _, r in first]
    for i, (_, r) in zip(redo, again):
        rows[i] = r
    best = float("inf")
    out = []
    for i, (v, r) in enumerate(zip(values, rows)):
        # deadline axis: the best energy achievable with deadlines scaled by at most v
        best = min(best, r["total_energy_j"]) if args.axis == "deadline" else r["total_energy_j"]
        out.append([i, args.axis, v, r["policy"], r["total_energy_j"], r["total_carbon_g"], r["sla_violations"], r["horizon_us"], best])
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fmt.write_csv(fh, SWEEP_HEADER, out)
    print(path)
    return EXIT_OK


def cmd_fit(args) -> int:
    path = args.telemetry
    if not Path(path).is_file():
        raise InputError(f"telemetry file not found: {path}", path)
    with open(path, newline="") as fh:
        try:
            samples = read_telemetry_csv(fh)
        except (InsufficientSamplesError, RankDeficientError):
            raise
        except ValueError as e:
            raise InputError(f"telemetry {path}: {e}", path) from None
    model = fit_model(samples, args.features.split(",") if args.features else None)
    out = Path(args.out) if args.out else Path(os.environ.get(OUTDIR_ENV) or DEFAULT_OUTDIR) / "model.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(fmt.dumps(model.to_dict()))
    print(out)
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    if not Path(args.spec).is_file():
        raise InputError(f"trace spec not found: {args.spec}", args.spec)
    try:
        trace = generate_trace(_load_spec(args.spec, args.seed))
    except DomainError as e:
        raise InputError(f"trace spec {args.spec}: {e}", args.spec) from None
    out = Path(args.out) if args.out else Path(os.environ.get(OUTDIR_ENV) or DEFAULT_OUTDIR) / "trace.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out)
    print(out)
    return EXIT_OK


def _classify(path: str) -> str:
    p = Path(path)
    if p.suffix == ".jsonl":
        return "trace"
    if p.suffix == ".csv":
        with open(p, newline="") as fh:
            head = next(csv.reader(fh), [])
        return "intensity" if [h.strip() for h in head] == ["timestamp_us", "intensity_g_per_kwh"] else "telemetry"
    if p.suffix in (".yaml", ".yml", ".json"):
        data = yaml.safe_load(p.read_text()) if p.suffix != ".json" else json.loads(p.read_text())
        if isinstance(data, dict) and ("devices" in data or "media" in data):
            return "catalog"
        if isinstance(data, dict) and "apps" in data:
            return "spec"
        return "config"
    return "unknown"


def validate_paths(paths: dict[str, list[str]]) -> list[str]:
    """Check every file against its type's invariants; returns all problems found."""
    problems = []
    catalogs, traces = [], []
    for kind, items in paths.items():
        for path in items:
            if not Path(path).is_file():
                problems.append(f"{path}: file not found")
                continue
            try:
                if kind == "auto":
                    kind_here = _classify(path)
                else:
                    kind_here = kind
                problems += [f"{path}: {p}" for p in _validate_one(kind_here, path, catalogs, traces)]
            except (OSError, ValueError, yaml.YAMLError) as e:
                problems.append(f"{path}: {e}")
    for cat in catalogs:
        for trace_path, trace in traces:
            problems += [f"{trace_path}: {p}" for p in cat.trace_problems(trace)]
    return problems


def _validate_one(kind: str, path: str, catalogs: list, traces: list) -> list[str]:
    if kind == "trace":
        with open(path) as fh:
            funcs, probs = audit_trace(fh)
        traces.append((path, funcs))
        return probs
    if kind == "catalog":
        try:
            catalogs.append(load_catalog(path))
        except CatalogError as e:
            return e.problems
        return []
    if kind == "intensity":
        try:
            load_intensity_csv(path)
        except DomainError as e:
            return [str(e)]
        return []
    if kind == "telemetry":
        with open(path, newline="") as fh:
            try:
                read_telemetry_csv(fh)
            except RankDeficientError as e:
                return [f"collinear columns {e.columns}"]
            except ValueError as e:
                return [str(e)]
        return []
    if kind == "spec":
        try:
            _load_spec(path, None)
        except InputError as e:
            return [str(e)]
        return []
    if kind == "config":
        try:
            cfg = RunConfig(**load_config_file(path))
        except InputError as e:
            return [str(e)]
        return [p for p in cfg.problems() if not p.startswith("no trace")]
    return [f"cannot tell what kind of file this is ({Path(path).suffix or 'no suffix'})"]


def cmd_validate(args) -> int:
    paths = {
        "trace": args.trace or [],
        "catalog": args.catalog or [],
        "intensity": args.intensity or [],
        "telemetry": args.telemetry or [],
        "config": args.config or [],
        "spec": args.spec or [],
        "auto": args.paths or [],
    }
    if not any(paths.values()):
        raise InputError("nothing to validate")
    problems = validate_paths(paths)
    for p in problems:
        _emit("input", p)
    if problems:
        return EXIT_INPUT
    print("ok")
    return EXIT_OK


# -- parser --------------------------------------------------------------

def _run_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="YAML or JSON file with RunConfig keys")
    g.add_argument("--trace", help="JSON-lines trace")
    g.add_argument("--trace-spec", dest="trace_spec", help="generate the trace from this spec instead")
    g.add_argument("--catalog", help="hardware catalog (default: bundled example)")
    g.add_argument("--intensity", help="carbon intensity CSV (default: constant 400 g/kWh)")
    g.add_argument("--policy", help=f"mufunction or one of: {', '.join(POLICIES)}")
    g.add_argument("--window-us", dest="window_length_us", type=int, help="scheduling window length")
    g.add_argument("--solver", choices=SOLVERS, help="solver used by --policy mufunction")
    g.add_argument("--sla-mode", dest="sla_mode", choices=("hard", "soft"))
    g.add_argument("--penalty", dest="penalty_j_per_us", type=float, help="soft-mode penalty, J per late µs")
    g.add_argument("--idle-mode", dest="idle_mode", choices=("proportional", "equal", "operator"))
    g.add_argument("--seed", type=int, help="seed for generated traces")
    g.add_argument("--out", dest="output_dir", help=f"output directory (default ${OUTDIR_ENV} or ./{DEFAULT_OUTDIR})")
    g.add_argument("--horizon-us", dest="horizon_us", type=int, help="minimum simulated horizon")
    g.add_argument("--power-gating", dest="power_gating", action="store_const", const=True, help="gate idle devices at window boundaries")
    g.add_argument("--deadline-scale", dest="deadline_scale", type=float, help="multiply every deadline")
    g.add_argument("--deferral", choices=("carbon", "slack"), help="deferral rule of the mufunction policies")
    g.add_argument("--cold-start-us", dest="cold_start_us", type=int, help="faas-baseline container cold start")
    g.add_argument("--record-wall-time", dest="record_wall_time", action="store_const", const=True,
                   help="include solver wall time in metrics.json (breaks byte-identical reruns)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carbonsched", description=__doc__, allow_abbrev=False,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _run_options()

    s = sub.add_parser("simulate", parents=[common], allow_abbrev=False, help="run one simulation")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], allow_abbrev=False, help="run one simulation per sweep point")
    s.add_argument("--axis", choices=SWEEP_AXES, required=True)
    s.add_argument("--values", action="append", help="comma-separated scales, intensity CSVs or policy names")
    s.add_argument("--jobs", type=int, default=1, help="points simulated concurrently")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", allow_abbrev=False, help="fit an attribution model to telemetry")
    s.add_argument("telemetry", help="CSV with feature columns and measured_j")
    s.add_argument("--features", help="comma-separated subset of feature columns")
    s.add_argument("--out", help="model JSON path (default $CARBONSCHED_OUTDIR/model.json)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("gen-trace", allow_abbrev=False, help="generate a synthetic trace")
    s.add_argument("--spec", required=True, help="trace spec (YAML or JSON)")
    s.add_argument("--seed", type=int, help="override the spec's seed")
    s.add_argument("--out", help="trace path (default $CARBONSCHED_OUTDIR/trace.jsonl)")
    s.set_defaults(func=cmd_gen_trace)

    s = sub.add_parser("validate", allow_abbrev=False, help="check input files and report every problem")
    s.add_argument("paths", nargs="*", help="files whose kind is inferred from name and content")
    for kind in ("trace", "catalog", "intensity", "telemetry", "config", "spec"):
        s.add_argument(f"--{kind}", action="append")
    s.set_defaults(func=cmd_validate)
    return parser


def _emit(kind: str, message: str, path: Optional[str] = None) -> None:
    rec = {"error": kind, "message": message}
    if path:
        rec["path"] = path
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        _emit("input", "--jobs must be >= 1")
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as e:
        _emit("input", str(e), e.path)
        return EXIT_INPUT
    except InsufficientSamplesError as e:
        _emit("input", str(e))
        return EXIT_INPUT
    except RankDeficientError as e:
        _emit("runtime", f"rank-deficient telemetry; collinear columns: {', '.join(e.columns)}")
        return EXIT_RUNTIME
    except (TraceParseError, TraceValidationError, CatalogError) as e:
        _emit("input", str(e))
        return EXIT_INPUT
    except SimulationInvariantError as e:
        _emit("runtime", str(e))
        return EXIT_RUNTIME
    except Exception as e:  # anything else is a runtime failure, not bad input
        _emit("runtime", f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
