"""Fixed-length scheduling windows: slack-based admission and per-window placement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .catalog import Catalog
from .hardware import CarbonIntensitySeries, intensity_at
from .placement import (
    EXACT_CUTOFF,
    Assignment,
    HeuristicSolver,
    PlacementProblem,
    effective_duration,
    media_choices,
    solve_exact,
    solve_round_robin,
)
from .placement.model import media_map
from .workload import MicroFunction

DEFAULT_WINDOW_US = 1000

POLICIES = ("mufunction-exact", "mufunction-heuristic", "no-defer", "round-robin", "faas-baseline")
DEFERRAL_RULES = ("carbon", "slack")


class UnknownPolicyError(ValueError):
    def __init__(self, name: str):
        super().__init__(f"unknown policy {name!r}; valid policies: {', '.join(POLICIES)}")


def check_policy(name: str) -> str:
    if name not in POLICIES:
        raise UnknownPolicyError(name)
    return name


@dataclass
class ScheduleWindow:
    index: int
    start: int
    length: int = DEFAULT_WINDOW_US
    admitted: set = field(default_factory=set)
    deferred: set = field(default_factory=set)

    @property
    def end(self) -> int:
        return self.start + self.length

    @classmethod
    def at(cls, index: int, length: int = DEFAULT_WINDOW_US) -> "ScheduleWindow":
        return cls(index, index * length, length)


@dataclass
class Partition:
    admit: list[MicroFunction]
    defer: list[MicroFunction]
    infeasible: list[str]


def _deadline(f: MicroFunction, scale: float) -> float:
    return f.arrival + scale * f.sla.deadline


def function_slack(f: MicroFunction, now: int, best: int, scale: float = 1.0) -> float:
    return _deadline(f, scale) - now - best


def partition(
    pending: Sequence[MicroFunction],
    window: ScheduleWindow,
    duration_estimator: Callable[[MicroFunction], int],
    deadline_scale: float = 1.0,
) -> Partition:
    """Admit functions whose slack is below one window; defer the rest.

    Deferring a function with slack >= W leaves it slack >= 0 at the next
    boundary, so deferral never strands feasibility. Functions already out
    of reach (slack < 0) are admitted best-effort and reported.
    """
    admit, defer, infeasible = [], [], []
    for f in sorted(pending, key=lambda f: f.id):
        s = function_slack(f, window.start, duration_estimator(f), deadline_scale)
        if s < 0:
            infeasible.append(f.id)
        (admit if s < window.length else defer).append(f)
    window.admitted |= {f.id for f in admit}
    window.deferred |= {f.id for f in defer}
    return Partition(admit, defer, infeasible)


def latest_feasible_boundary(f: MicroFunction, now: int, best: int, window: int, scale: float = 1.0) -> int:
    """Last window boundary at which `f` still has non-negative slack (now if none)."""
    s = function_slack(f, now, best, scale)
    if s < window:
        return now
    return now + int(s // window) * window


def greener_ahead(series: CarbonIntensitySeries, now: int, last: int, window: int) -> bool:
    """Is some boundary in (now, last] strictly greener than `now`?"""
    if last <= now:
        return False
    here = intensity_at(series, now)
    if intensity_at(series, now + window) < here:
        return True
    for t, _ in series.samples:
        if now + window < t <= last:
            b = -(-t // window) * window
            if b <= last and intensity_at(series, b) < here:
                return True
    return False


class BestDuration:
    """Globally best standalone duration of each function, memoised by id."""

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self._cache: dict[str, int] = {}
        self._probe = PlacementProblem((), catalog.devices, catalog.media, catalog.object_locations, 0, 0)

    def __call__(self, f: MicroFunction) -> int:
        d = self._cache.get(f.id)
        if d is None:
            c = self.catalog
            d = min(
                effective_duration(f, dev, media_map(self._probe, mc), c.locality.get(dev.id, frozenset()))
                for dev in c.devices
                if f.speedup_on(dev) is not None
                for mc in media_choices(self._probe, f)
            )
            self._cache[f.id] = d
        return d


@dataclass
class DeviceState:
    available_from: dict[str, int] = field(default_factory=dict)
    warm: dict[str, set] = field(default_factory=dict)
    powered_off: set = field(default_factory=set)


@dataclass
class WindowResult:
    window: ScheduleWindow
    solved: list[tuple[PlacementProblem, Assignment]]
    flagged: set  # admitted functions reported infeasible (late at admission or unplaceable)


class WindowedScheduler:
    """Per-window admission and placement for the windowed policies."""

    def __init__(
        self,
        catalog: Catalog,
        policy: str,
        series: CarbonIntensitySeries,
        window: int = DEFAULT_WINDOW_US,
        sla_mode: str = "hard",
        penalty_j_per_us: float = 1e-6,
        deadline_scale: float = 1.0,
        deferral: str = "carbon",
        exact_cutoff: int = EXACT_CUTOFF,
    ):
        check_policy(policy)
        if policy == "faas-baseline":
            raise ValueError("faas-baseline is event-driven, not windowed")
        if deferral not in DEFERRAL_RULES:
            raise ValueError(f"deferral must be one of {DEFERRAL_RULES}")
        self.catalog = catalog
        self.policy = policy
        self.series = series
        self.window = window
        self.sla_mode = sla_mode
        self.penalty = penalty_j_per_us
        self.scale = deadline_scale
        self.deferral = deferral
        self.cutoff = exact_cutoff
        self.best = BestDuration(catalog)
        self.heuristic = HeuristicSolver()
        self.rr_pointer = 0

    def admit(self, pending: Sequence[MicroFunction], w: ScheduleWindow) -> Partition:
        if self.policy in ("no-defer", "round-robin"):
            admit = sorted(pending, key=lambda f: f.id)
            w.admitted |= {f.id for f in admit}
            late = [f.id for f in admit if function_slack(f, w.start, self.best(f), self.scale) < 0]
            return Partition(admit, [], late)
        part = partition(pending, w, self.best, self.scale)
        if self.deferral == "slack" or not part.defer:
            return part
        # carbon rule: spend slack only when a strictly greener window is reachable
        keep = []
        for f in part.defer:
            last = latest_feasible_boundary(f, w.start, self.best(f), w.length, self.scale)
            if greener_ahead(self.series, w.start, last, w.length):
                keep.append(f)
            else:
                part.admit.append(f)
        moved = {f.id for f in part.defer} - {f.id for f in keep}
        w.deferred -= moved
        w.admitted |= moved
        part.admit.sort(key=lambda f: f.id)
        part.defer = keep
        return part

    def problem(self, functions: Sequence[MicroFunction], w: ScheduleWindow, state: DeviceState, sla_mode: str) -> PlacementProblem:
        c = self.catalog
        return PlacementProblem(
            functions=tuple(functions),
            devices=c.devices,
            media=c.media,
            object_locations={o: c.object_locations[o] for f in functions for o in f.objects()},
            now=w.start,
            window_end=w.end,
            available_from={d: t for d, t in state.available_from.items() if t > w.start},
            warm={d: frozenset(v) for d, v in state.warm.items()},
            powered_off=frozenset(state.powered_off),
            local_media=c.locality,
            network_j_per_byte=c.network_j_per_byte,
            sla_mode=sla_mode,
            penalty_j_per_us=self.penalty,
            deadline_scale=self.scale,
        )

    def solve(self, problem: PlacementProblem) -> Assignment:
        if self.policy == "round-robin":
            a = solve_round_robin(problem, self.rr_pointer)
            devs = [d.id for d in problem.devices]
            if a.placements:
                last = max(a.placements.values(), key=lambda p: (p.start, p.device))
                self.rr_pointer = (devs.index(last.device) + 1) % len(devs)
            return a
        if self.policy == "mufunction-exact" and len(problem.functions) <= self.cutoff:
            return solve_exact(problem, cutoff=self.cutoff, incumbent=self.heuristic.solve(problem))
        return self.heuristic.solve(problem)

    def on_boundary(self, pending: Sequence[MicroFunction], w: ScheduleWindow, state: DeviceState) -> tuple[WindowResult, list[MicroFunction]]:
        """Admit and place; returns (result, still-deferred functions)."""
        part = self.admit(pending, w)
        flagged = set(part.infeasible)
        solved = []
        if part.admit:
            p = self.problem(part.admit, w, state, self.sla_mode)
            a = self.solve(p)
            solved.append((p, a))
            leftovers = [f for f in part.admit if f.id not in a.placements]
            if leftovers:
                # best effort: run what the hard-mode solve could not fit, late
                flagged |= {f.id for f in leftovers}
                after = _advance(state, a)
                q = self.problem(leftovers, w, after, "soft")
                solved.append((q, self.heuristic.solve(q)))
        return WindowResult(w, solved, flagged), part.defer


def _advance(state: DeviceState, a: Assignment) -> DeviceState:
    avail = dict(state.available_from)
    warm = {d: set(v) for d, v in state.warm.items()}
    off = set(state.powered_off)
    for p in a.placements.values():
        avail[p.device] = max(avail.get(p.device, 0), p.end)
        off.discard(p.device)
    for (did, app) in a.startup_charges:
        if app:
            warm.setdefault(did, set()).add(app)
    return DeviceState(avail, warm, off)


def run_horizon(trace, catalog: Catalog, policy: str, intensity_series: CarbonIntensitySeries, config=None):
    """Schedule a whole trace window by window; returns the engine's result."""
    from .engine import SimConfig, run

    cfg = config or SimConfig()
    return run(trace, catalog, policy, cfg, intensity_series)
