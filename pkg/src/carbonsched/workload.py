"""Micro-functions, SLAs, synthetic bursty traces and the JSON-lines trace format."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Optional, Sequence

import numpy as np

from .hardware import US_PER_S, ComputeDevice, DomainError


class TraceParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TraceValidationError(ValueError):
    pass


class CallGraphCycleError(TraceValidationError):
    def __init__(self, cycle: Sequence[str]):
        super().__init__("call graph cycle: " + " -> ".join(cycle))
        self.cycle = list(cycle)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent RNG for a named consumer of the run seed.

    Adding a new consumer never shifts the draws of the existing ones.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(zlib.crc32(name.encode()),)))


@dataclass(frozen=True)
class SLA:
    deadline: int
    percentile: float = 1.0
    carbon_budget: Optional[float] = None

    def __post_init__(self):
        problems = sla_problems(self)
        if problems:
            raise DomainError("; ".join(problems))


def sla_problems(s: SLA) -> list[str]:
    out = []
    if not s.deadline > 0:
        out.append("sla.deadline_us must be > 0")
    if not 0.0 < s.percentile <= 1.0:
        out.append("sla.percentile must be in (0, 1]")
    if s.carbon_budget is not None and s.carbon_budget < 0:
        out.append("sla.carbon_budget_g must be >= 0")
    return out


@dataclass(frozen=True)
class MicroFunction:
    id: str
    app_id: str
    arrival: int
    work: float
    speedup: Mapping[str, float]
    sla: SLA
    reads: tuple[tuple[str, int], ...] = ()
    writes: tuple[tuple[str, int], ...] = ()
    energy_budget: Optional[float] = None
    parent: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "speedup", dict(self.speedup))
        object.__setattr__(self, "reads", tuple((str(o), int(b)) for o, b in self.reads))
        object.__setattr__(self, "writes", tuple((str(o), int(b)) for o, b in self.writes))
        problems = function_problems(self)
        if problems:
            raise DomainError(f"function {self.id!r}: " + "; ".join(problems))

    @property
    def deadline_at(self) -> int:
        """Absolute completion deadline."""
        return self.arrival + self.sla.deadline

    def speedup_on(self, device: ComputeDevice) -> Optional[float]:
        """Profiled speedup on `device`; a per-id entry overrides the per-kind one."""
        if device.id in self.speedup:
            return self.speedup[device.id]
        return self.speedup.get(device.kind.value)

    def objects(self) -> tuple[str, ...]:
        """Distinct data objects touched, sorted."""
        return tuple(sorted({o for o, _ in self.reads} | {o for o, _ in self.writes}))

    def bytes_by_object(self) -> dict[str, int]:
        # writes are charged exactly like reads
        out: dict[str, int] = {}
        for o, b in self.reads + self.writes:
            out[o] = out.get(o, 0) + b
        return out


def function_problems(f: MicroFunction) -> list[str]:
    out = []
    if not f.work > 0:
        out.append("work must be > 0")
    if f.arrival < 0:
        out.append("arrival_us must be >= 0")
    for k, v in f.speedup.items():
        if not v > 0:
            out.append(f"speedup[{k}] must be > 0")
    for name, accesses in (("reads", f.reads), ("writes", f.writes)):
        for o, b in accesses:
            if b < 0:
                out.append(f"{name}[{o}].bytes must be >= 0")
    if f.parent is not None and f.parent == f.id:
        out.append("parent must differ from id")
    if f.energy_budget is not None and f.energy_budget < 0:
        out.append("energy_budget_j must be >= 0")
    return out


@dataclass(frozen=True)
class DataObject:
    id: str
    size: int
    home: str

    def __post_init__(self):
        if not self.size > 0:
            raise DomainError(f"object {self.id!r}: size must be > 0")


def slack(f: MicroFunction, now: int, best_duration: int) -> int:
    """Schedulable headroom; negative once the deadline is already out of reach."""
    if best_duration < 0:
        raise DomainError("best_duration must be >= 0")
    return f.arrival + f.sla.deadline - now - best_duration


def find_cycle(parents: Mapping[str, Optional[str]]) -> Optional[list[str]]:
    """First cycle in a child -> parent map, as a closed path, or None."""
    state: dict[str, int] = {}
    for start in sorted(parents):
        path: list[str] = []
        node: Optional[str] = start
        while node is not None and node in parents and state.get(node) is None:
            state[node] = 1
            path.append(node)
            node = parents[node]
        if node is not None and state.get(node) == 1:
            cycle = path[path.index(node):] + [node]
            return cycle
        for n in path:
            state[n] = 2
    return None


def validate_trace(functions: Sequence[MicroFunction]) -> list[str]:
    """Every invariant violation across a parsed trace (not just the first)."""
    out = []
    seen: set[str] = set()
    for i, f in enumerate(functions):
        if f.id in seen:
            out.append(f"duplicate function id {f.id!r}")
        seen.add(f.id)
        if i and f.arrival < functions[i - 1].arrival:
            out.append(f"function {f.id!r}: arrival {f.arrival} precedes previous arrival {functions[i - 1].arrival}")
    for f in functions:
        if f.parent is not None and f.parent not in seen:
            out.append(f"function {f.id!r}: unknown parent {f.parent!r}")
    cycle = find_cycle({f.id: f.parent for f in functions})
    if cycle:
        out.append("call graph cycle: " + " -> ".join(cycle))
    return out


# -- JSON lines -------------------------------------------------------------

_TOP_KEYS = {"id", "app_id", "arrival_us", "work", "speedup", "reads", "writes", "sla", "energy_budget_j", "parent"}
_SLA_KEYS = {"deadline_us", "percentile", "carbon_budget_g"}


def function_to_dict(f: MicroFunction) -> dict:
    sla = {"deadline_us": f.sla.deadline, "percentile": f.sla.percentile}
    if f.sla.carbon_budget is not None:
        sla["carbon_budget_g"] = f.sla.carbon_budget
    d = {
        "id": f.id,
        "app_id": f.app_id,
        "arrival_us": f.arrival,
        "work": f.work,
        "speedup": {k: f.speedup[k] for k in sorted(f.speedup)},
        "reads": [{"object_id": o, "bytes": b} for o, b in f.reads],
        "writes": [{"object_id": o, "bytes": b} for o, b in f.writes],
        "sla": sla,
    }
    if f.energy_budget is not None:
        d["energy_budget_j"] = f.energy_budget
    if f.parent is not None:
        d["parent"] = f.parent
    return d


def _accesses(raw, name: str) -> tuple[tuple[str, int], ...]:
    if not isinstance(raw, list):
        raise ValueError(f"{name} must be an array")
    out = []
    for a in raw:
        if not isinstance(a, dict) or set(a) != {"object_id", "bytes"}:
            raise ValueError(f"{name} entries need exactly object_id and bytes")
        if not isinstance(a["bytes"], int) or isinstance(a["bytes"], bool):
            raise ValueError(f"{name}.bytes must be an integer")
        out.append((str(a["object_id"]), a["bytes"]))
    return tuple(out)


def function_from_dict(d: Mapping) -> MicroFunction:
    """Build a function from one decoded trace record; ValueError names the offending field."""
    if not isinstance(d, dict):
        raise ValueError("record must be a JSON object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown field(s) {sorted(unknown)}")
    missing = {"id", "app_id", "arrival_us", "work", "speedup", "sla"} - set(d)
    if missing:
        raise ValueError(f"missing field(s) {sorted(missing)}")
    sla_raw = d["sla"]
    if not isinstance(sla_raw, dict):
        raise ValueError("sla must be an object")
    if set(sla_raw) - _SLA_KEYS or "deadline_us" not in sla_raw:
        raise ValueError("sla needs deadline_us and only deadline_us/percentile/carbon_budget_g")
    if not isinstance(d["arrival_us"], int) or not isinstance(sla_raw["deadline_us"], int):
        raise ValueError("arrival_us and sla.deadline_us must be integers")
    if not isinstance(d["speedup"], dict):
        raise ValueError("speedup must be an object")
    cb = sla_raw.get("carbon_budget_g")
    sla = SLA(
        deadline=sla_raw["deadline_us"],
        percentile=float(sla_raw.get("percentile", 1.0)),
        carbon_budget=None if cb is None else float(cb),
    )
    eb = d.get("energy_budget_j")
    return MicroFunction(
        id=str(d["id"]),
        app_id=str(d["app_id"]),
        arrival=d["arrival_us"],
        work=float(d["work"]),
        speedup={str(k): float(v) for k, v in d["speedup"].items()},
        sla=sla,
        reads=_accesses(d.get("reads", []), "reads"),
        writes=_accesses(d.get("writes", []), "writes"),
        energy_budget=None if eb is None else float(eb),
        parent=None if d.get("parent") is None else str(d["parent"]),
    )


def serialize_trace(functions: Iterable[MicroFunction], stream: IO[str]) -> None:
    for f in functions:
        stream.write(json.dumps(function_to_dict(f), separators=(",", ":")) + "\n")


def dumps_trace(functions: Iterable[MicroFunction]) -> str:
    return "".join(json.dumps(function_to_dict(f), separators=(",", ":")) + "\n" for f in functions)


def parse_trace(stream: Iterable[str]) -> list[MicroFunction]:
    out = []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceParseError(lineno, f"invalid JSON: {e.msg}") from None
        try:
            out.append(function_from_dict(raw))
        except (ValueError, TypeError, KeyError) as e:
            raise TraceParseError(lineno, str(e)) from None
    for i in range(1, len(out)):
        if out[i].arrival < out[i - 1].arrival:
            raise TraceValidationError(f"arrivals not sorted at function {out[i].id!r}")
    ids = {f.id for f in out}
    if len(ids) != len(out):
        raise TraceValidationError("duplicate function ids")
    for f in out:
        if f.parent is not None and f.parent not in ids:
            raise TraceValidationError(f"function {f.id!r}: unknown parent {f.parent!r}")
    cycle = find_cycle({f.id: f.parent for f in out})
    if cycle:
        raise CallGraphCycleError(cycle)
    return out


def load_trace(path) -> list[MicroFunction]:
    with open(path) as fh:
        return parse_trace(fh)


def save_trace(functions: Iterable[MicroFunction], path) -> None:
    with open(path, "w") as fh:
        serialize_trace(functions, fh)


# -- synthetic traces -------------------------------------------------------

@dataclass(frozen=True)
class AppProfile:
    work: tuple[float, float]
    speedup: Mapping[str, float]
    deadline_us: tuple[int, int]
    percentile: float = 1.0
    reads: tuple[tuple[str, int], ...] = ()
    writes: tuple[tuple[str, int], ...] = ()
    energy_budget_j: Optional[float] = None
    carbon_budget_g: Optional[float] = None
    calls: Optional[str] = None
    call_probability: float = 0.0


@dataclass(frozen=True)
class TraceSpec:
    duration: int
    base_rate: float
    apps: Mapping[str, AppProfile]
    app_mix: Mapping[str, float]
    burst_rate: Optional[float] = None
    burst_duty: float = 0.0
    burst_period: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.burst_rate is None:
            object.__setattr__(self, "burst_rate", self.base_rate)
        if self.duration < 0 or self.base_rate < 0 or self.burst_rate < 0:
            raise DomainError("duration and rates must be >= 0")
        if not 0.0 <= self.burst_duty <= 1.0:
            raise DomainError("burst_duty must be in [0, 1]")
        if abs(sum(self.app_mix.values()) - 1.0) > 1e-9:
            raise DomainError("app_mix probabilities must sum to 1")
        missing = set(self.app_mix) - set(self.apps)
        if missing:
            raise DomainError(f"app_mix names apps without a profile: {sorted(missing)}")
        for a, p in self.apps.items():
            if p.calls is not None and p.calls not in self.apps:
                raise DomainError(f"app {a!r} calls unknown app {p.calls!r}")


def rate_segments(spec: TraceSpec) -> list[tuple[float, float, float]]:
    """(start_us, end_us, rate_per_s) pieces of the two-state modulated process."""
    if spec.duration == 0:
        return []
    if spec.burst_period <= 0 or spec.burst_duty == 0.0:
        return [(0.0, float(spec.duration), spec.base_rate)]
    segs = []
    p = 0.0
    burst_len = spec.burst_duty * spec.burst_period
    while p < spec.duration:
        b_end = min(p + burst_len, spec.duration)
        if b_end > p:
            segs.append((p, b_end, spec.burst_rate))
        end = min(p + spec.burst_period, spec.duration)
        if end > b_end:
            segs.append((b_end, end, spec.base_rate))
        p += spec.burst_period
    return segs


def arrival_times(spec: TraceSpec) -> np.ndarray:
    """Continuous arrival instants (µs) of the modulated Poisson process."""
    rng = substream(spec.seed, "trace/arrivals")
    out = []
    for start, end, rate in rate_segments(spec):
        if rate <= 0:
            continue
        mean_gap = US_PER_S / rate
        t = start
        while True:
            t += rng.exponential(mean_gap)
            if t >= end:
                break
            out.append(t)
    return np.asarray(out, dtype=float)


def _draw_function(fid: str, app: str, profile: AppProfile, arrival: int, rng, parent=None) -> MicroFunction:
    lo, hi = profile.work
    work = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    dlo, dhi = profile.deadline_us
    deadline = int(rng.integers(dlo, dhi + 1)) if dhi > dlo else int(dlo)
    return MicroFunction(
        id=fid,
        app_id=app,
        arrival=arrival,
        work=work,
        speedup=dict(profile.speedup),
        sla=SLA(deadline, profile.percentile, profile.carbon_budget_g),
        reads=profile.reads,
        writes=profile.writes,
        energy_budget=profile.energy_budget_j,
        parent=parent,
    )


def generate_trace(spec: TraceSpec) -> list[MicroFunction]:
    times = arrival_times(spec)
    rng = substream(spec.seed, "trace/attributes")
    names = sorted(spec.app_mix)
    probs = np.array([spec.app_mix[a] for a in names], dtype=float)
    probs = probs / probs.sum()
    out = []
    width = max(6, len(str(len(times))))
    for i, t in enumerate(times):
        app = names[int(rng.choice(len(names), p=probs))]
        arrival = int(math.floor(t))
        fid = f"f{i:0{width}d}"
        f = _draw_function(fid, app, spec.apps[app], arrival, rng)
        out.append(f)
        prof = spec.apps[app]
        depth = 0
        # RPC fan-out: each call spawns one child arriving with its caller
        while prof.calls is not None and depth < 8 and rng.random() < prof.call_probability:
            depth += 1
            child_app = prof.calls
            f = _draw_function(f"{fid}.{depth}", child_app, spec.apps[child_app], arrival, rng, parent=f.id)
            out.append(f)
            prof = spec.apps[child_app]
    out.sort(key=lambda f: (f.arrival, f.id))
    return out


def trace_spec_from_dict(d: Mapping) -> TraceSpec:
    apps = {}
    for name, p in d["apps"].items():
        p = dict(p)
        for k in ("work", "deadline_us"):
            p[k] = tuple(p[k])
        for k in ("reads", "writes"):
            p[k] = tuple((a["object_id"], int(a["bytes"])) for a in p.get(k, []))
        apps[name] = AppProfile(**p)
    rest = {k: v for k, v in d.items() if k != "apps"}
    return TraceSpec(apps=apps, **rest)


def audit_trace(stream: Iterable[str]) -> tuple[list[MicroFunction], list[str]]:
    """Parse leniently: every bad line and every trace-level invariant violation is reported."""
    good, problems = [], []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            good.append(function_from_dict(json.loads(line)))
        except json.JSONDecodeError as e:
            problems.append(f"line {lineno}: invalid JSON: {e.msg}")
        except (ValueError, TypeError, KeyError) as e:
            problems.append(f"line {lineno}: {e}")
    return good, problems + validate_trace(good)
