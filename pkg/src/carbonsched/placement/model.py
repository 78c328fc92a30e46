"""Placement instances: edges from micro-functions to (device, media) choices and their costs.

A device runs one function at a time at its full capacity; the functions
placed on it in one window run back to back in earliest-deadline order,
starting when the device is free. Costs are marginal joules, so a set of
placements costs the sum of its edges plus one start-up charge per cold
(device, app) pair and one wake charge per powered-off device used.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Collection, Mapping, Optional, Sequence

from ..hardware import US_PER_S, ComputeDevice, DomainError, StorageMedium, power_draw
from ..workload import MicroFunction, function_from_dict, function_to_dict

SLA_MODES = ("hard", "soft")

MediaChoice = tuple[tuple[str, str], ...]  # ((object_id, medium_id), ...) sorted by object


def _us(x: float) -> int:
    # ceil to whole µs; rounding first keeps exact quotients like 5e5 from becoming 500001.
    # Anything that runs holds its device for at least 1 µs.
    return max(1, int(math.ceil(round(x, 6))))


def effective_duration(
    f: MicroFunction,
    device: ComputeDevice,
    media: Mapping[str, StorageMedium],
    local_media: Optional[Collection[str]] = None,
) -> int:
    """Whole µs `f` holds `device`: compute time plus every object access.

    `media` maps each object the function touches to the medium serving it.
    With `local_media=None` every access counts as local.
    """
    s = f.speedup_on(device)
    if s is None:
        raise DomainError(f"function {f.id!r} has no speedup for device {device.id!r} ({device.kind.value})")
    terms = [f.work / (device.capacity * s) * US_PER_S]
    for obj, nbytes in sorted(f.bytes_by_object().items()):
        m = media[obj]
        terms.append(m.access_latency_tail + nbytes / m.bandwidth * US_PER_S)
        if local_media is not None and m.id not in local_media:
            terms.append(m.remote_access_penalty)
    return _us(math.fsum(terms))


@dataclass(frozen=True)
class EdgeCost:
    compute_energy: float
    data_energy: float
    total: float
    duration: int
    # charged once per cold (device, app) pair by the assignment, not per edge
    startup_energy: float = 0.0


@dataclass(frozen=True)
class Option:
    """One candidate edge for a function: a device plus a medium per object."""

    device: str
    media: MediaChoice
    cost: EdgeCost

    @property
    def key(self) -> tuple:
        return (0, self.device, self.media)


UNPLACED_KEY = (1,)


@dataclass(frozen=True)
class PlacementProblem:
    functions: tuple[MicroFunction, ...]
    devices: tuple[ComputeDevice, ...]
    media: tuple[StorageMedium, ...]
    object_locations: Mapping[str, tuple[str, ...]]
    now: int
    window_end: int
    available_from: Mapping[str, int] = field(default_factory=dict)
    warm: Mapping[str, frozenset] = field(default_factory=dict)
    powered_off: frozenset = frozenset()
    local_media: Mapping[str, frozenset] = field(default_factory=dict)
    network_j_per_byte: float = 0.0
    sla_mode: str = "hard"
    penalty_j_per_us: float = 0.0
    deadline_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(sorted(self.functions, key=lambda f: f.id)))
        object.__setattr__(self, "devices", tuple(sorted(self.devices, key=lambda d: d.id)))
        object.__setattr__(self, "media", tuple(sorted(self.media, key=lambda m: m.id)))
        object.__setattr__(self, "object_locations", {o: tuple(sorted(v)) for o, v in sorted(self.object_locations.items())})
        object.__setattr__(self, "warm", {d: frozenset(v) for d, v in self.warm.items()})
        object.__setattr__(self, "local_media", {d: frozenset(v) for d, v in self.local_media.items()})
        object.__setattr__(self, "powered_off", frozenset(self.powered_off))
        problems = problem_problems(self)
        if problems:
            raise DomainError("; ".join(problems))
        object.__setattr__(self, "_media_by_id", {m.id: m for m in self.media})
        object.__setattr__(self, "_device_by_id", {d.id: d for d in self.devices})

    # lookups
    def medium(self, mid: str) -> StorageMedium:
        return self._media_by_id[mid]

    def device(self, did: str) -> ComputeDevice:
        return self._device_by_id[did]

    def deadline_of(self, f: MicroFunction) -> float:
        return f.arrival + self.deadline_scale * f.sla.deadline

    def edf_order(self) -> list[MicroFunction]:
        return sorted(self.functions, key=lambda f: (self.deadline_of(f), f.id))

    def start_cursor(self, did: str) -> int:
        """Earliest instant the device can begin new work, wake-up included."""
        d = self.device(did)
        t = max(self.now, self.available_from.get(did, self.now))
        if did in self.powered_off:
            t += d.startup_latency
        return t

    def is_cold(self, did: str, app: str) -> bool:
        d = self.device(did)
        if d.startup_latency == 0 and d.startup_energy == 0:
            return False
        return app not in self.warm.get(did, frozenset())

    def residual_capacity(self, did: str) -> float:
        """Work-units/s the device can still offer averaged over the window."""
        d = self.device(did)
        span = self.window_end - self.now
        if span <= 0:
            return 0.0
        free = max(0, self.window_end - self.start_cursor(did))
        return d.capacity * min(free, span) / span

    def is_remote(self, did: str, mid: str) -> bool:
        return mid not in self.local_media.get(did, frozenset())

    def with_deadline_scale(self, scale: float) -> "PlacementProblem":
        return _replace(self, deadline_scale=scale)

    def to_dict(self) -> dict:
        return {
            "functions": [function_to_dict(f) for f in self.functions],
            "devices": [_device_dict(d) for d in self.devices],
            "media": [_medium_dict(m) for m in self.media],
            "object_locations": {o: list(v) for o, v in self.object_locations.items()},
            "now": self.now,
            "window_end": self.window_end,
            "available_from": dict(sorted(self.available_from.items())),
            "warm": {d: sorted(v) for d, v in sorted(self.warm.items())},
            "powered_off": sorted(self.powered_off),
            "local_media": {d: sorted(v) for d, v in sorted(self.local_media.items())},
            "network_j_per_byte": self.network_j_per_byte,
            "sla_mode": self.sla_mode,
            "penalty_j_per_us": self.penalty_j_per_us,
            "deadline_scale": self.deadline_scale,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlacementProblem":
        d = dict(d)
        d["functions"] = tuple(function_from_dict(f) for f in d["functions"])
        d["devices"] = tuple(ComputeDevice(**x) for x in d["devices"])
        d["media"] = tuple(StorageMedium(**x) for x in d["media"])
        d["object_locations"] = {o: tuple(v) for o, v in d["object_locations"].items()}
        d["warm"] = {k: frozenset(v) for k, v in d.get("warm", {}).items()}
        d["local_media"] = {k: frozenset(v) for k, v in d.get("local_media", {}).items()}
        d["powered_off"] = frozenset(d.get("powered_off", ()))
        return cls(**d)


def _replace(p: PlacementProblem, **changes) -> PlacementProblem:
    kw = {k: getattr(p, k) for k in PlacementProblem.__dataclass_fields__}
    kw.update(changes)
    return PlacementProblem(**kw)


def _device_dict(d: ComputeDevice) -> dict:
    x = asdict(d)
    x["kind"] = d.kind.value
    return x


def _medium_dict(m: StorageMedium) -> dict:
    x = asdict(m)
    x["tier"] = m.tier.value
    return x


def problem_problems(p: PlacementProblem) -> list[str]:
    out = []
    if p.sla_mode not in SLA_MODES:
        out.append(f"sla_mode must be one of {SLA_MODES}")
    if p.window_end < p.now:
        out.append("window_end precedes now")
    if p.penalty_j_per_us < 0 or p.network_j_per_byte < 0:
        out.append("penalty and network coefficients must be >= 0")
    if p.deadline_scale < 0:
        out.append("deadline_scale must be >= 0")
    media_ids = {m.id for m in p.media}
    device_ids = {d.id for d in p.devices}
    if len(media_ids) != len(p.media) or len(device_ids) != len(p.devices):
        out.append("duplicate device or medium ids")
    for f in p.functions:
        for o in f.objects():
            locs = p.object_locations.get(o, ())
            if not locs:
                out.append(f"object {o!r} read by {f.id!r} has no location")
            elif not set(locs) <= media_ids:
                out.append(f"object {o!r} located on unknown medium")
    for did, t in p.available_from.items():
        if did not in device_ids:
            out.append(f"available_from names unknown device {did!r}")
    return out


def media_map(problem: PlacementProblem, media: MediaChoice) -> dict[str, StorageMedium]:
    return {o: problem.medium(m) for o, m in media}


def edge_cost(f: MicroFunction, device: ComputeDevice, media: MediaChoice, problem: PlacementProblem) -> EdgeCost:
    """Marginal joules of running `f` on `device` with the given media.

    The device is held at full load for the whole effective duration (data
    stalls included), so the marginal draw over idle is power_draw(1) -
    power_draw(0) for that long. Data moves cost the medium's active energy
    plus network energy when the medium is remote from the device.
    """
    mm = media_map(problem, media)
    local = problem.local_media.get(device.id, frozenset())
    duration = effective_duration(f, device, mm, local)
    marginal_w = power_draw(device, 1.0) - power_draw(device, 0.0)
    compute = marginal_w * duration / US_PER_S
    data_terms = []
    for obj, nbytes in sorted(f.bytes_by_object().items()):
        m = mm[obj]
        data_terms.append(m.transfer_energy(nbytes))
        if m.id not in local:
            data_terms.append(problem.network_j_per_byte * nbytes)
    data = math.fsum(data_terms)
    startup = device.startup_energy if problem.is_cold(device.id, f.app_id) else 0.0
    return EdgeCost(compute, data, compute + data, duration, startup)


def media_choices(problem: PlacementProblem, f: MicroFunction) -> list[MediaChoice]:
    objs = f.objects()
    return [tuple(zip(objs, combo)) for combo in itertools.product(*(problem.object_locations[o] for o in objs))]


def options_for(problem: PlacementProblem, f: MicroFunction) -> list[Option]:
    """Every (device, media) edge for `f`, sorted by device id then media."""
    out = []
    for d in problem.devices:
        if f.speedup_on(d) is None:
            continue
        for mc in media_choices(problem, f):
            out.append(Option(d.id, mc, edge_cost(f, d, mc, problem)))
    return out


def standalone_feasible(problem: PlacementProblem, f: MicroFunction, o: Option) -> bool:
    """Could `f` meet its deadline on this edge with the device to itself?"""
    t = problem.start_cursor(o.device)
    if problem.is_cold(o.device, f.app_id):
        t += problem.device(o.device).startup_latency
    return t + o.cost.duration <= problem.deadline_of(f)


def prune_dominated(options: Sequence[Option]) -> list[Option]:
    """Drop media choices another choice on the same device beats on both cost and duration.

    Ties on cost survive unless the survivor also has the smaller key, so the
    lexicographic tie-break among optimal assignments is unchanged.
    """
    keep = []
    for b in options:
        dominated = False
        for a in options:
            if a is b or a.device != b.device:
                continue
            if a.cost.total <= b.cost.total and a.cost.duration <= b.cost.duration and (
                a.cost.total < b.cost.total or a.key < b.key
            ):
                dominated = True
                break
        if not dominated:
            keep.append(b)
    return keep


@dataclass(frozen=True)
class Placement:
    device: str
    start: int
    end: int
    media: MediaChoice
    cost: EdgeCost
    window: int = 0


@dataclass
class SolverStats:
    solver: str = ""
    nodes_expanded: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    wall_time_s: float = 0.0


@dataclass
class Assignment:
    placements: dict[str, Placement]
    feasible: dict[str, bool]
    total_cost: float
    startup_charges: dict[tuple[str, str], float] = field(default_factory=dict)
    penalties: dict[str, float] = field(default_factory=dict)
    stats: SolverStats = field(default_factory=SolverStats)

    @property
    def unplaced(self) -> int:
        return sum(1 for v in self.feasible.values() if not v)

    @property
    def complete(self) -> bool:
        return self.unplaced == 0

    def rank(self) -> tuple[int, float]:
        return (self.unplaced, self.total_cost)

    def key(self) -> tuple:
        return tuple(
            (0, self.placements[f].device, self.placements[f].media) if f in self.placements else UNPLACED_KEY
            for f in sorted(self.feasible)
        )


@dataclass
class Evaluation:
    valid: bool
    unplaced: int
    cost: float
    placements: dict[str, Placement]
    startup_charges: dict[tuple[str, str], float]
    penalties: dict[str, float]


def evaluate(problem: PlacementProblem, choice: Mapping[str, Optional[Option]]) -> Evaluation:
    """Sequence each device in deadline order and price the whole choice.

    The returned cost is the canonical figure every solver reports:
    math.fsum over edge totals, start-up/wake charges and soft-mode penalties.
    In hard mode a placed function finishing late makes the choice invalid.
    """
    by_device: dict[str, list[MicroFunction]] = {}
    for f in problem.edf_order():
        o = choice.get(f.id)
        if o is not None:
            by_device.setdefault(o.device, []).append(f)
    placements: dict[str, Placement] = {}
    startups: dict[tuple[str, str], float] = {}
    penalties: dict[str, float] = {}
    valid = True
    for did in sorted(by_device):
        dev = problem.device(did)
        t = problem.start_cursor(did)
        if did in problem.powered_off and dev.startup_energy:
            startups[(did, "")] = dev.startup_energy
        for f in by_device[did]:
            o = choice[f.id]
            if problem.is_cold(did, f.app_id) and (did, f.app_id) not in startups:
                t += dev.startup_latency
                startups[(did, f.app_id)] = dev.startup_energy
            end = t + o.cost.duration
            placements[f.id] = Placement(did, t, end, o.media, o.cost)
            late = end - problem.deadline_of(f)
            if late > 0:
                if problem.sla_mode == "hard":
                    valid = False
                else:
                    penalties[f.id] = problem.penalty_j_per_us * late
            t = end
    terms = [placements[fid].cost.total for fid in sorted(placements)]
    terms += [startups[k] for k in sorted(startups)]
    terms += [penalties[k] for k in sorted(penalties)]
    unplaced = sum(1 for f in problem.functions if choice.get(f.id) is None)
    return Evaluation(valid, unplaced, math.fsum(terms), placements, startups, penalties)


def to_assignment(problem: PlacementProblem, choice: Mapping[str, Optional[Option]], stats: SolverStats) -> Assignment:
    ev = evaluate(problem, choice)
    feasible = {f.id: f.id in ev.placements for f in problem.functions}
    return Assignment(ev.placements, feasible, ev.cost, ev.startup_charges, ev.penalties, stats)


def check_no_overlap(assignment: Assignment) -> bool:
    """Sweep each device's placements: never two running at once."""
    by_dev: dict[str, list[tuple[int, int]]] = {}
    for p in assignment.placements.values():
        by_dev.setdefault(p.device, []).append((p.start, p.end))
    for spans in by_dev.values():
        spans.sort()
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 < e0:
                return False
    return True
