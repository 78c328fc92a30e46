"""Greedy placement with a media-choice memo, and a round-robin baseline."""

from __future__ import annotations

import math
import time
from typing import Optional

from ..workload import MicroFunction
from .model import (
    Assignment,
    MediaChoice,
    Option,
    PlacementProblem,
    SolverStats,
    edge_cost,
    media_choices,
    to_assignment,
)

RESIDUAL_BUCKETS = 10


class _DeviceQueue:
    """Functions tentatively placed on one device, kept in deadline order."""

    def __init__(self, problem: PlacementProblem, did: str):
        self.problem = problem
        self.did = did
        self.items: list[tuple[MicroFunction, Option]] = []

    def simulate(self, extra: Optional[tuple[MicroFunction, Option]] = None):
        """(feasible, end, startup joules, penalty joules) with `extra` inserted."""
        p = self.problem
        items = self.items + ([extra] if extra else [])
        items.sort(key=lambda x: (p.deadline_of(x[0]), x[0].id))
        dev = p.device(self.did)
        t = p.start_cursor(self.did)
        started = set()
        startup = []
        if items and self.did in p.powered_off:
            startup.append(dev.startup_energy)
        penalty = []
        ok = True
        for f, o in items:
            if p.is_cold(self.did, f.app_id) and f.app_id not in started:
                started.add(f.app_id)
                t += dev.startup_latency
                startup.append(dev.startup_energy)
            t += o.cost.duration
            late = t - p.deadline_of(f)
            if late > 0:
                if p.sla_mode == "hard":
                    ok = False
                else:
                    penalty.append(p.penalty_j_per_us * late)
        return ok, t, math.fsum(startup), math.fsum(penalty)

    def residual_bucket(self) -> int:
        p = self.problem
        span = p.window_end - p.now
        if span <= 0:
            return 0
        _, end, _, _ = self.simulate()
        free = min(max(0, p.window_end - max(end, p.now)), span) / span
        return min(RESIDUAL_BUCKETS - 1, int(free * RESIDUAL_BUCKETS))


class HeuristicSolver:
    """Greedy by ascending best-edge cost, remembering media choices across windows.

    The memo maps (app, device kind, residual-capacity bucket, objects) to the
    media choice found cheapest when that key was first seen. Reuse may be
    stale for a different device of the same kind; feasibility is always
    re-checked with real durations.
    """

    def __init__(self):
        self.cache: dict[tuple, MediaChoice] = {}
        self.hits = 0
        self.misses = 0

    def _cheapest_media(self, p: PlacementProblem, f: MicroFunction, did: str, bucket: int) -> Option:
        dev = p.device(did)
        key = (f.app_id, dev.kind.value, bucket, f.objects())
        mc = self.cache.get(key)
        if mc is not None and all(m in p.object_locations.get(o, ()) for o, m in mc):
            self.hits += 1
            return Option(did, mc, edge_cost(f, dev, mc, p))
        self.misses += 1
        best = None
        for mc in media_choices(p, f):
            o = Option(did, mc, edge_cost(f, dev, mc, p))
            if best is None or (o.cost.total, o.key) < (best.cost.total, best.key):
                best = o
        self.cache[key] = best.media
        return best

    @staticmethod
    def _fastest_media(p: PlacementProblem, f: MicroFunction, did: str) -> Option:
        dev = p.device(did)
        opts = [Option(did, mc, edge_cost(f, dev, mc, p)) for mc in media_choices(p, f)]
        return min(opts, key=lambda o: (o.cost.duration, o.cost.total, o.key))

    def solve(self, problem: PlacementProblem) -> Assignment:
        t0 = time.perf_counter()
        hits0, misses0 = self.hits, self.misses
        p = problem
        queues = {d.id: _DeviceQueue(p, d.id) for d in p.devices}
        eligible = {f.id: [d.id for d in p.devices if f.speedup_on(d) is not None] for f in p.functions}

        best_edge = {}
        for f in p.functions:
            costs = [self._cheapest_media(p, f, did, queues[did].residual_bucket()).cost.total for did in eligible[f.id]]
            best_edge[f.id] = min(costs) if costs else math.inf
        order = sorted(p.functions, key=lambda f: (best_edge[f.id], f.id))

        choice: dict[str, Optional[Option]] = {}
        for f in order:
            pick = None
            for did in eligible[f.id]:
                q = queues[did]
                base_ok, _, base_startup, base_pen = q.simulate()
                cands = [self._cheapest_media(p, f, did, q.residual_bucket())]
                for attempt in range(2):
                    o = cands[-1]
                    ok, _, startup, pen = q.simulate((f, o))
                    if ok:
                        inc = o.cost.total + (startup - base_startup) + (pen - base_pen)
                        if pick is None or (inc, did) < (pick[0], pick[1]):
                            pick = (inc, did, o)
                        break
                    if attempt == 0:
                        fast = self._fastest_media(p, f, did)
                        if fast.media == o.media:
                            break
                        cands.append(fast)
            if pick is None:
                choice[f.id] = None
            else:
                choice[f.id] = pick[2]
                queues[pick[1]].items.append((f, pick[2]))

        stats = SolverStats(
            solver="heuristic",
            nodes_expanded=len(p.functions),
            cache_hits=self.hits - hits0,
            cache_misses=self.misses - misses0,
            wall_time_s=time.perf_counter() - t0,
        )
        return to_assignment(p, choice, stats)


def solve_heuristic(problem: PlacementProblem, solver: Optional[HeuristicSolver] = None) -> Assignment:
    return (solver or HeuristicSolver()).solve(problem)


def solve_round_robin(problem: PlacementProblem, start: int = 0) -> Assignment:
    """Cost-blind baseline: devices in turn, first listed replica of each object."""
    t0 = time.perf_counter()
    p = problem
    devs = [d.id for d in p.devices]
    queues = {did: _DeviceQueue(p, did) for did in devs}
    ptr = start
    choice: dict[str, Optional[Option]] = {}
    for f in p.functions:
        mc = tuple((o, p.object_locations[o][0]) for o in f.objects())
        choice[f.id] = None
        for k in range(len(devs)):
            did = devs[(ptr + k) % len(devs)]
            dev = p.device(did)
            if f.speedup_on(dev) is None:
                continue
            o = Option(did, mc, edge_cost(f, dev, mc, p))
            ok, *_ = queues[did].simulate((f, o))
            if ok:
                queues[did].items.append((f, o))
                choice[f.id] = o
                ptr = (ptr + k + 1) % len(devs)
                break
    stats = SolverStats(solver="round_robin", nodes_expanded=len(p.functions), wall_time_s=time.perf_counter() - t0)
    return to_assignment(p, choice, stats)
