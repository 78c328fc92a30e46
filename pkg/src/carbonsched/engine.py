"""Discrete-event simulation of device power timelines with energy and carbon ledgers."""

from __future__ import annotations

import enum
import heapq
import io
import math
import time
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

from . import fmt
from .catalog import Catalog
from .hardware import J_PER_KWH, US_PER_S, CarbonIntensitySeries, DeviceKind, DomainError, intensity_at
from .placement import Assignment, PlacementProblem, effective_duration
from .placement.model import MediaChoice
from .provenance import IDLE_MODES, OPERATOR, AttributionModel, ProvenanceRecord, TelemetrySample, aggregate_provenance, attribute_interval
from .scheduler import (
    DEFAULT_WINDOW_US,
    DEFERRAL_RULES,
    DeviceState,
    ScheduleWindow,
    UnknownPolicyError,
    WindowedScheduler,
    check_policy,
)
from .workload import MicroFunction

FAAS_COLD_START_US = 125_000
FAAS_KEEPALIVE_US = 600 * US_PER_S
NETWORK = "network"


class EventKind(enum.IntEnum):
    # value is the tie-break rank at equal timestamps
    COMPLETION = 0
    INTENSITY_CHANGE = 1
    WINDOW_BOUNDARY = 2
    ARRIVAL = 3
    CUSTOM = 4
    START = 5


@dataclass(frozen=True)
class Event:
    time: int
    kind: EventKind
    key: str
    payload: Any = None


class SimulationInvariantError(RuntimeError):
    def __init__(self, message: str, state: dict):
        super().__init__(f"{message}\nstate: {fmt.dumps(state).strip()}")
        self.state = state


class EventQueue:
    """Min-heap ordered by (time, kind rank, key, insertion order)."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, e: Event) -> None:
        heapq.heappush(self._heap, (e.time, int(e.kind), e.key, self._seq, e))
        self._seq += 1

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[-1]

    def __len__(self) -> int:
        return len(self._heap)

    def pending(self, kinds: set) -> bool:
        return any(item[-1].kind in kinds for item in self._heap)


@dataclass(frozen=True)
class SimConfig:
    window_us: int = DEFAULT_WINDOW_US
    sla_mode: str = "hard"
    penalty_j_per_us: float = 1e-6
    idle_mode: str = "proportional"
    horizon_us: int = 0
    power_gating: bool = False
    cold_start_us: int = FAAS_COLD_START_US
    keepalive_us: int = FAAS_KEEPALIVE_US
    deadline_scale: float = 1.0
    deferral: str = "carbon"
    exact_cutoff: int = 12
    record_wall_time: bool = False

    def __post_init__(self):
        problems = []
        if self.window_us <= 0:
            problems.append("window_us must be > 0")
        if self.sla_mode not in ("hard", "soft"):
            problems.append("sla_mode must be hard or soft")
        if self.idle_mode not in IDLE_MODES:
            problems.append(f"idle_mode must be one of {IDLE_MODES}")
        if self.deferral not in DEFERRAL_RULES:
            problems.append(f"deferral must be one of {DEFERRAL_RULES}")
        if self.horizon_us < 0 or self.cold_start_us < 0 or self.keepalive_us < 0:
            problems.append("horizon, cold start and keepalive must be >= 0")
        if self.penalty_j_per_us < 0 or self.deadline_scale <= 0:
            problems.append("penalty must be >= 0 and deadline_scale > 0")
        if problems:
            raise DomainError("; ".join(problems))


@dataclass
class ScheduleRow:
    function_id: str
    app_id: str
    window: int
    device_id: str
    start: int
    end: int
    deadline: float
    flagged: bool
    energy: float = 0.0
    carbon: float = 0.0

    @property
    def violated(self) -> bool:
        return self.flagged or self.end > self.deadline


@dataclass
class Segment:
    meter: str
    start: int
    end: int
    state: str
    power: float
    function_id: str = ""


@dataclass
class Lump:
    meter: str
    time: int
    energy: float
    reason: str


@dataclass
class Metrics:
    policy: str
    horizon_us: int
    functions: int
    total_energy: float
    energy_by_meter: dict[str, float]
    operational_carbon: float
    embodied_carbon: float
    sla_violations: int
    budget_overruns: int
    utilization: dict[str, float]
    apps: dict[str, dict[str, Any]]
    solver: dict[str, Any]
    cold_start_time_total: int
    operator_energy: float

    @property
    def total_carbon(self) -> float:
        return self.operational_carbon + self.embodied_carbon

    @property
    def violation_rate(self) -> float:
        return self.sla_violations / self.functions if self.functions else 0.0

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "horizon_us": self.horizon_us,
            "functions": self.functions,
            "total_energy_j": self.total_energy,
            "energy_by_meter_j": self.energy_by_meter,
            "operator_energy_j": self.operator_energy,
            "carbon_g": {
                "operational": self.operational_carbon,
                "embodied": self.embodied_carbon,
                "total": self.total_carbon,
            },
            "sla_violations": {"count": self.sla_violations, "rate": self.violation_rate, "budget_overruns": self.budget_overruns},
            "utilization": self.utilization,
            "apps": self.apps,
            "solver": self.solver,
            "cold_start_time_total_us": self.cold_start_time_total,
        }


@dataclass
class SimResult:
    metrics: Metrics
    schedule: list[ScheduleRow]
    provenance: dict[str, ProvenanceRecord]
    segments: list[Segment]
    lumps: list[Lump]
    media_accesses: list[tuple[str, str, int, float]]  # (function, meter, time, joules)

    def files(self) -> dict[str, str]:
        """Export file name -> contents; all floats at 17 significant digits."""
        out = {"metrics.json": fmt.dumps(self.metrics.to_dict())}
        buf = io.StringIO()
        fmt.write_csv(
            buf,
            ["function_id", "window", "device_id", "start_us", "end_us", "energy_j", "carbon_g", "violated"],
            ([r.function_id, r.window, r.device_id, r.start, r.end, r.energy, r.carbon, r.violated] for r in self.schedule),
        )
        out["schedule.csv"] = buf.getvalue()
        buf = io.StringIO()
        fmt.write_csv(
            buf,
            ["function_id", "app_id", "direct_j", "idle_share_j", "descendant_j", "carbon_g"],
            (
                [r.function_id, r.app_id, r.direct_energy, r.idle_share, r.descendant_energy, r.carbon]
                for _, r in sorted(self.provenance.items())
            ),
        )
        out["provenance.csv"] = buf.getvalue()
        buf = io.StringIO()
        rows = [[s.meter, s.start, s.end, s.state, s.power, s.power * (s.end - s.start) / US_PER_S, s.function_id] for s in self.segments]
        rows += [[x.meter, x.time, x.time, x.reason, 0.0, x.energy, ""] for x in self.lumps]
        rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
        fmt.write_csv(buf, ["device_id", "start_us", "end_us", "state", "power_w", "energy_j", "function_id"], rows)
        out["devices.csv"] = buf.getvalue()
        return out

    def write(self, outdir) -> list[Path]:
        d = Path(outdir)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in self.files().items():
            p = d / name
            p.write_text(text)
            paths.append(p)
        return paths


class _Device:
    __slots__ = ("dev", "state", "power", "fid", "since")

    def __init__(self, dev):
        self.dev = dev
        self.state = "idle"
        self.power = dev.idle_power
        self.fid = ""
        self.since = 0


def meter_model(catalog: Catalog, meter: str) -> AttributionModel:
    """Ground-truth attribution model of one meter: marginal joules per unit of activity."""
    if meter == NETWORK:
        return AttributionModel({"network_bytes": catalog.network_j_per_byte})
    for m in catalog.media:
        if m.id == meter:
            return AttributionModel({"storage_bytes_moved": m.active_power_per_bw})
    d = catalog.device(meter)
    feat = "cpu_cycles" if d.kind == DeviceKind.CPU else "accelerator_cycles"
    return AttributionModel({feat: d.dynamic_power / d.capacity})


class Simulation:
    def __init__(
        self,
        trace: Sequence[MicroFunction],
        catalog: Catalog,
        policy: str,
        config: SimConfig,
        series: CarbonIntensitySeries,
    ):
        check_policy(policy)
        problems = catalog.trace_problems(list(trace))
        if problems:
            raise DomainError("; ".join(problems))
        ids = {m.id for m in catalog.media} | {NETWORK}
        if ids & {d.id for d in catalog.devices}:
            raise DomainError("device ids must differ from medium ids and 'network'")
        self.trace = sorted(trace, key=lambda f: (f.arrival, f.id))
        self.catalog = catalog
        self.policy = policy
        self.cfg = config
        self.series = series
        self.W = config.window_us
        self.q = EventQueue()
        self.now = 0
        self.devices = {d.id: _Device(d) for d in catalog.devices}
        self.resident = catalog.resident_bytes()
        self.models = {m: meter_model(catalog, m) for m in self.meters()}
        self.fn = {f.id: f for f in self.trace}
        # current accounting piece
        self.piece_start = 0
        self.terms: dict[str, list[float]] = {m: [] for m in self.meters()}
        self.activity: dict[tuple[str, str], float] = {}
        # results
        self.meter_energy: dict[str, list[float]] = {m: [] for m in self.meters()}
        self.carbon_terms: list[float] = []
        self.direct: dict[str, list[float]] = {}
        self.idle: dict[str, list[float]] = {}
        self.fcarbon: dict[str, list[float]] = {}
        self.operator: list[float] = []
        self.segments: list[Segment] = []
        self.lumps: list[Lump] = []
        self.accesses: list[tuple[str, str, int, float]] = []
        self.rows: dict[str, ScheduleRow] = {}
        self.busy_us: Counter = Counter()
        self.cold_start_us = 0
        self.solver_stats = Counter()
        self.solver_wall = 0.0
        self.solver_names: Counter = Counter()
        # scheduling state
        self.state = DeviceState(warm={d.id: set() for d in catalog.devices})
        self.pending: list[MicroFunction] = []
        self.faas_free: dict[str, int] = {}
        self.faas_warm_until: dict[str, int] = {}
        self.faas_binding: dict[str, str] = {}
        if policy == "faas-baseline":
            self._bind_faas()
            self.sched = None
        else:
            self.sched = WindowedScheduler(
                catalog, policy, series, self.W, config.sla_mode, config.penalty_j_per_us,
                config.deadline_scale, config.deferral, config.exact_cutoff,
            )

    def meters(self) -> list[str]:
        return [d.id for d in self.catalog.devices] + [m.id for m in self.catalog.media] + [NETWORK]

    # -- integration -----------------------------------------------------

    def _advance(self, t: int) -> None:
        if t < self.now:
            raise SimulationInvariantError(f"event time {t} precedes current time {self.now}", self._dump())
        dt = t - self.now
        if dt == 0:
            return
        for did, d in self.devices.items():
            if d.power:
                self.terms[did].append(d.power * dt / US_PER_S)
            if d.state == "busy":
                self.busy_us[did] += dt
                k = (did, d.fid)
                self.activity[k] = self.activity.get(k, 0.0) + dt
        for m in self.catalog.media:
            w = m.idle_power_per_byte * self.resident[m.id]
            if w:
                self.terms[m.id].append(w * dt / US_PER_S)
        self.now = t

    def _set_state(self, did: str, state: str, power: float, fid: str = "") -> None:
        d = self.devices[did]
        if self.now > d.since:
            self.segments.append(Segment(did, d.since, self.now, d.state, d.power, d.fid))
        d.state, d.power, d.fid, d.since = state, power, fid, self.now

    def _lump(self, meter: str, energy: float, reason: str) -> None:
        if energy:
            self.terms[meter].append(energy)
            self.lumps.append(Lump(meter, self.now, energy, reason))

    def _close_piece(self) -> None:
        """Close the books on [piece_start, now) for every meter."""
        t0 = self.piece_start
        if self.now == t0 and not any(self.terms.values()):
            return
        intensity = intensity_at(self.series, t0)
        g_per_j = intensity / J_PER_KWH
        for meter in self.meters():
            energy = math.fsum(self.terms[meter])
            self.meter_energy[meter].append(energy)
            self.carbon_terms.append(energy * g_per_j)
            feats = self._features(meter)
            samples = [TelemetrySample(fid, meter, {name: v}) for fid, (name, v) in sorted(feats.items())]
            for fid, (direct, idle) in attribute_interval(self.models[meter], samples, energy, self.cfg.idle_mode).items():
                if fid == OPERATOR:
                    self.operator.append(idle)
                    continue
                self.direct.setdefault(fid, []).append(direct)
                self.idle.setdefault(fid, []).append(idle)
                self.fcarbon.setdefault(fid, []).append((direct + idle) * g_per_j)
            self.terms[meter] = []
        self.activity = {}
        self.piece_start = self.now

    def _features(self, meter: str) -> dict[str, tuple[str, float]]:
        out = {}
        if meter in self.devices:
            d = self.devices[meter].dev
            name = "cpu_cycles" if d.kind == DeviceKind.CPU else "accelerator_cycles"
            for (m, fid), us in self.activity.items():
                if m == meter:
                    out[fid] = (name, us / US_PER_S * d.capacity)
        else:
            name = "network_bytes" if meter == NETWORK else "storage_bytes_moved"
            for (m, fid), nbytes in self.activity.items():
                if m == "bytes:" + meter:
                    out[fid] = (name, nbytes)
        return out

    def _dump(self) -> dict:
        return {
            "now": self.now,
            "policy": self.policy,
            "devices": {k: {"state": d.state, "function": d.fid, "since": d.since} for k, d in self.devices.items()},
            "pending": [f.id for f in self.pending],
            "queued_events": len(self.q),
        }

    # -- execution -------------------------------------------------------

    def _commit(self, f: MicroFunction, did: str, start: int, end: int, media: MediaChoice, window: int, flagged: bool) -> None:
        deadline = f.arrival + self.cfg.deadline_scale * f.sla.deadline
        self.rows[f.id] = ScheduleRow(f.id, f.app_id, window, did, start, end, deadline, flagged)
        self.q.push(Event(start, EventKind.START, did, (f.id, media)))
        self.q.push(Event(end, EventKind.COMPLETION, did, f.id))

    def _on_start(self, did: str, fid: str, media: MediaChoice) -> None:
        d = self.devices[did]
        if d.state not in ("idle", "starting", "coldstart"):
            raise SimulationInvariantError(f"start of {fid} on busy device {did}", self._dump())
        self._set_state(did, "busy", d.dev.peak_power, fid)
        f = self.fn[fid]
        nbytes = f.bytes_by_object()
        local = self.catalog.locality.get(did, frozenset())
        media_of = dict(media)
        for obj in sorted(nbytes):
            m = next(x for x in self.catalog.media if x.id == media_of[obj])
            e = m.transfer_energy(nbytes[obj])
            self._book_bytes(m.id, fid, nbytes[obj], e)
            if m.id not in local and self.catalog.network_j_per_byte:
                self._book_bytes(NETWORK, fid, nbytes[obj], self.catalog.network_j_per_byte * nbytes[obj])

    def _book_bytes(self, meter: str, fid: str, nbytes: int, energy: float) -> None:
        k = ("bytes:" + meter, fid)
        self.activity[k] = self.activity.get(k, 0.0) + nbytes
        self.terms[meter].append(energy)
        self.accesses.append((fid, meter, self.now, energy))

    def _on_custom(self, did: str, payload) -> None:
        what, energy, power = payload
        d = self.devices[did]
        if d.state == "busy":
            raise SimulationInvariantError(f"{what} on busy device {did}", self._dump())
        self._set_state(did, "starting" if what != "coldstart" else "coldstart", power)
        self._lump(did, energy, what)

    def _on_completion(self, did: str, fid: str) -> None:
        d = self.devices[did]
        if d.fid != fid:
            raise SimulationInvariantError(f"completion of {fid} but {did} runs {d.fid!r}", self._dump())
        self._set_state(did, "idle", d.dev.idle_power)

    # -- windowed policies ----------------------------------------------

    def _on_boundary(self) -> None:
        w = ScheduleWindow(self.now // self.W, self.now, self.W)
        placed_on = set()
        if self.sched is not None and self.pending:
            t0 = time.perf_counter()
            result, self.pending = self.sched.on_boundary(self.pending, w, self.state)
            self.solver_wall += time.perf_counter() - t0
            for problem, a in result.solved:
                self._apply(problem, a, w, result.flagged)
                placed_on |= {p.device for p in a.placements.values()}
        if self.cfg.power_gating:
            self._gate(placed_on)

    def _apply(self, problem: PlacementProblem, a: Assignment, w: ScheduleWindow, flagged: set) -> None:
        self.solver_names[a.stats.solver] += 1
        self.solver_stats["nodes_expanded"] += a.stats.nodes_expanded
        self.solver_stats["cache_hits"] += a.stats.cache_hits
        self.solver_stats["cache_misses"] += a.stats.cache_misses
        by_dev: dict[str, list] = {}
        for f in problem.edf_order():
            p = a.placements.get(f.id)
            if p is not None:
                by_dev.setdefault(p.device, []).append((f, p))
        for did in sorted(by_dev):
            dev = problem.device(did)
            t = max(problem.now, problem.available_from.get(did, problem.now))
            if did in problem.powered_off:
                self.q.push(Event(t, EventKind.CUSTOM, did, ("wake", dev.startup_energy, dev.idle_power)))
                t += dev.startup_latency
                self.cold_start_us += dev.startup_latency
                self.state.powered_off.discard(did)
            started = set()
            for f, p in by_dev[did]:
                if problem.is_cold(did, f.app_id) and f.app_id not in started:
                    started.add(f.app_id)
                    self.q.push(Event(t, EventKind.CUSTOM, did, ("startup", dev.startup_energy, dev.idle_power)))
                    t += dev.startup_latency
                    self.cold_start_us += dev.startup_latency
                    self.state.warm[did].add(f.app_id)
                if t != p.start:
                    raise SimulationInvariantError(f"placement of {f.id} starts at {p.start}, sequence says {t}", self._dump())
                self._commit(f, did, p.start, p.end, p.media, w.index, f.id in flagged)
                t = p.end
            self.state.available_from[did] = t

    def _gate(self, placed_on: set) -> None:
        for did, d in sorted(self.devices.items()):
            dev = d.dev
            if did in self.state.powered_off or did in placed_on:
                continue
            if d.state != "idle" or self.state.available_from.get(did, 0) > self.now:
                continue
            # only gate when one gated window pays for the wake-up
            if dev.idle_power * self.W / US_PER_S < dev.startup_energy:
                continue
            if self.sched is not None and any(
                self.sched.best(f) + self.now + self.W > f.arrival + self.cfg.deadline_scale * f.sla.deadline for f in self.pending
            ):
                continue
            self.power_gate(did)

    def power_gate(self, did: str) -> None:
        d = self.devices[did]
        if d.state != "idle" or self.state.available_from.get(did, 0) > self.now:
            raise SimulationInvariantError(f"gating {did} with committed work", self._dump())
        self._set_state(did, "off", 0.0)
        self.state.powered_off.add(did)
        # loaded app images do not survive power-off
        self.state.warm[did] = set()

    # -- FaaS baseline ---------------------------------------------------

    def _bind_faas(self) -> None:
        cpus = [d.id for d in self.catalog.devices if d.kind == DeviceKind.CPU]
        if not cpus:
            raise DomainError("faas-baseline needs at least one CPU device")
        apps = sorted({f.app_id for f in self.trace})
        self.faas_binding = {a: cpus[i % len(cpus)] for i, a in enumerate(apps)}

    def _on_faas_arrival(self, f: MicroFunction) -> None:
        did = self.faas_binding[f.app_id]
        dev = self.devices[did].dev
        if f.speedup_on(dev) is None:
            raise DomainError(f"function {f.id!r} cannot run on its app's container host {did}")
        media = tuple((o, self.catalog.object_locations[o][0]) for o in f.objects())
        mm = {o: next(m for m in self.catalog.media if m.id == mid) for o, mid in media}
        dur = effective_duration(f, dev, mm, self.catalog.locality.get(did, frozenset()))
        t = max(self.now, self.faas_free.get(did, 0))
        if self.faas_warm_until.get(f.app_id, -1) < t:
            # container start-up keeps the host busy
            self.q.push(Event(t, EventKind.CUSTOM, did, ("coldstart", dev.startup_energy, dev.peak_power)))
            t += self.cfg.cold_start_us
            self.cold_start_us += self.cfg.cold_start_us
        self._commit(f, did, t, t + dur, media, t // self.W, False)
        self.faas_free[did] = t + dur
        self.faas_warm_until[f.app_id] = t + dur + self.cfg.keepalive_us

    # -- main loop -------------------------------------------------------

    def run(self) -> SimResult:
        for f in self.trace:
            self.q.push(Event(f.arrival, EventKind.ARRIVAL, f.id, f))
        for t, _ in self.series.samples:
            if t > 0:
                self.q.push(Event(t, EventKind.INTENSITY_CHANGE, "grid"))
        self.q.push(Event(0, EventKind.WINDOW_BOUNDARY, "window"))
        busy_kinds = {EventKind.START, EventKind.COMPLETION, EventKind.CUSTOM, EventKind.ARRIVAL}
        while True:
            e = self.q.pop()
            self._advance(e.time)
            if e.kind == EventKind.COMPLETION:
                self._on_completion(e.key, e.payload)
            elif e.kind == EventKind.INTENSITY_CHANGE:
                self._close_piece()
            elif e.kind == EventKind.WINDOW_BOUNDARY:
                self._close_piece()
                done = (
                    self.now >= self.cfg.horizon_us
                    and not self.pending
                    and all(d.state in ("idle", "off") for d in self.devices.values())
                    and not self.q.pending(busy_kinds)
                )
                if done:
                    break
                self._on_boundary()
                self.q.push(Event(self.now + self.W, EventKind.WINDOW_BOUNDARY, "window"))
            elif e.kind == EventKind.ARRIVAL:
                if self.policy == "faas-baseline":
                    self._on_faas_arrival(e.payload)
                else:
                    self.pending.append(e.payload)
            elif e.kind == EventKind.CUSTOM:
                self._on_custom(e.key, e.payload)
            elif e.kind == EventKind.START:
                self._on_start(e.key, *e.payload)
        for did in sorted(self.devices):
            d = self.devices[did]
            self._set_state(did, d.state, d.power, d.fid)
        return self._result()

    def _result(self) -> SimResult:
        H = self.now
        records = {}
        for fid in sorted(self.rows):
            f = self.fn[fid]
            records[fid] = ProvenanceRecord(
                fid,
                math.fsum(self.direct.get(fid, [])),
                math.fsum(self.idle.get(fid, [])),
                0.0,
                math.fsum(self.fcarbon.get(fid, [])),
                f.app_id,
            )
        parents = {f.id: (f.parent if f.parent in self.fn else None) for f in self.trace}
        records = aggregate_provenance(records, parents)
        for fid, r in records.items():
            row = self.rows[fid]
            row.energy = r.own_energy
            row.carbon = r.carbon

        by_meter = {m: math.fsum(v) for m, v in self.meter_energy.items()}
        total = math.fsum(x for v in self.meter_energy.values() for x in v)
        embodied = math.fsum(d.embodied_rate * H / US_PER_S for d in self.catalog.devices)
        schedule = [self.rows[k] for k in sorted(self.rows, key=lambda k: (self.rows[k].start, k))]
        violations = sum(1 for r in schedule if r.violated)
        overruns = 0
        apps: dict[str, dict[str, Any]] = {}
        for r in schedule:
            f = self.fn[r.function_id]
            over = (f.energy_budget is not None and r.energy > f.energy_budget) or (
                f.sla.carbon_budget is not None and r.carbon > f.sla.carbon_budget
            )
            overruns += over
            a = apps.setdefault(f.app_id, {"functions": 0, "energy_j": [], "carbon_g": [], "violations": 0, "percentile_target": 0.0})
            a["functions"] += 1
            a["percentile_target"] = max(a["percentile_target"], f.sla.percentile)
            a["energy_j"].append(r.energy)
            a["carbon_g"].append(r.carbon)
            a["violations"] += r.violated
        for a in apps.values():
            a["energy_j"] = math.fsum(a["energy_j"])
            a["carbon_g"] = math.fsum(a["carbon_g"])
            # a percentile below 1 is judged over the app's whole population
            a["on_time_fraction"] = 1.0 - a["violations"] / a["functions"]
            a["tail_sla_met"] = a["on_time_fraction"] >= a["percentile_target"]
        solver = {
            "windows_solved": dict(sorted(self.solver_names.items())),
            "nodes_expanded": self.solver_stats["nodes_expanded"],
            "cache_hits": self.solver_stats["cache_hits"],
            "cache_misses": self.solver_stats["cache_misses"],
        }
        if self.cfg.record_wall_time:
            solver["wall_time_s"] = self.solver_wall
        metrics = Metrics(
            policy=self.policy,
            horizon_us=H,
            functions=len(self.trace),
            total_energy=total,
            energy_by_meter=by_meter,
            operational_carbon=math.fsum(self.carbon_terms),
            embodied_carbon=embodied,
            sla_violations=violations,
            budget_overruns=overruns,
            utilization={d: (self.busy_us[d] / H if H else 0.0) for d in sorted(self.devices)},
            apps=dict(sorted(apps.items())),
            solver=solver,
            cold_start_time_total=self.cold_start_us,
            operator_energy=math.fsum(self.operator),
        )
        return SimResult(metrics, schedule, records, self.segments, self.lumps, self.accesses)


def run(
    trace: Sequence[MicroFunction],
    catalog: Catalog,
    policy: str,
    config: Optional[SimConfig] = None,
    series: Optional[CarbonIntensitySeries] = None,
) -> SimResult:
    from .hardware import REFERENCE_INTENSITY

    return Simulation(
        trace, catalog, policy, config or SimConfig(), series or CarbonIntensitySeries.constant(REFERENCE_INTENSITY)
    ).run()


COMPARISON_HEADER = [
    "policy", "total_energy_j", "operational_carbon_g", "embodied_carbon_g", "total_carbon_g",
    "sla_violations", "violation_rate", "budget_overruns", "cold_start_time_total_us", "horizon_us",
]


def comparison_row(m: Metrics) -> list:
    return [
        m.policy, m.total_energy, m.operational_carbon, m.embodied_carbon, m.total_carbon,
        m.sla_violations, m.violation_rate, m.budget_overruns, m.cold_start_time_total, m.horizon_us,
    ]


def run_policy_comparison(
    trace: Sequence[MicroFunction],
    catalog: Catalog,
    policies: Sequence[str],
    config: Optional[SimConfig] = None,
    series: Optional[CarbonIntensitySeries] = None,
) -> list[SimResult]:
    """Run each policy over a common horizon so idle and embodied terms compare fairly."""
    if len(policies) < 2:
        raise ValueError("a comparison needs at least two policies")
    for p in policies:
        check_policy(p)
    cfg = config or SimConfig()
    results = [run(trace, catalog, p, cfg, series) for p in policies]
    H = max(r.metrics.horizon_us for r in results)
    if any(r.metrics.horizon_us != H for r in results):
        common = replace(cfg, horizon_us=H)
        results = [r if r.metrics.horizon_us == H else run(trace, catalog, r.metrics.policy, common, series) for r in results]
    return results


__all__ = [
    "Event",
    "EventKind",
    "EventQueue",
    "Metrics",
    "SimConfig",
    "SimResult",
    "SimulationInvariantError",
    "UnknownPolicyError",
    "meter_model",
    "run",
    "run_policy_comparison",
]
