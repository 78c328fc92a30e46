"""Exact placement by branch and bound, plus the exhaustive reference solver."""

from __future__ import annotations

import itertools
import math
import time
from typing import Callable, Optional, Sequence

from ..hardware import DomainError
from .model import (
    UNPLACED_KEY,
    Assignment,
    Option,
    PlacementProblem,
    SolverStats,
    evaluate,
    options_for,
    prune_dominated,
    standalone_feasible,
    to_assignment,
)

EXACT_CUTOFF = 12
_REL_TOL = 1e-9


def _worse(bound: float, best: float) -> bool:
    return bound - best > _REL_TOL * abs(best)


def _candidate_options(problem: PlacementProblem, f) -> list[Option]:
    opts = prune_dominated(options_for(problem, f))
    if problem.sla_mode == "hard":
        opts = [o for o in opts if standalone_feasible(problem, f, o)]
    return sorted(opts, key=lambda o: (o.cost.total, o.key))


def solve_exact(problem: PlacementProblem, cutoff: int = EXACT_CUTOFF, incumbent: Optional[Assignment] = None) -> Assignment:
    """Minimum-cost assignment, ties broken by (function id, device id, media).

    Functions are branched in deadline order so each device's completion
    times are known exactly at every node. In hard mode a function may be
    left unplaced; fewer unplaced functions always beats lower cost.
    """
    if len(problem.functions) > cutoff:
        raise DomainError(f"{len(problem.functions)} functions exceed the exact-solver cutoff of {cutoff}")
    t0 = time.perf_counter()
    stats = SolverStats(solver="exact")
    order = problem.edf_order()
    n = len(order)
    opts = [_candidate_options(problem, f) for f in order]
    deadlines = [problem.deadline_of(f) for f in order]
    hard = problem.sla_mode == "hard"

    suffix = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + (opts[i][0].cost.total if opts[i] else 0.0)

    if incumbent is None:
        from .heuristic import solve_heuristic

        incumbent = solve_heuristic(problem)
    best = [incumbent.unplaced, incumbent.total_cost, incumbent.key(), None]
    if incumbent.unplaced == n and n:
        best[1] = math.inf

    cursor = {d.id: problem.start_cursor(d.id) for d in problem.devices}
    started: set = set()
    woken: set = set()
    chosen: list[Optional[Option]] = [None] * n

    def leaf(unplaced: int) -> None:
        choice = {order[i].id: chosen[i] for i in range(n)}
        ev = evaluate(problem, choice)
        key = tuple(
            choice[f.id].key if choice[f.id] is not None else UNPLACED_KEY for f in problem.functions
        )
        cand = (unplaced, ev.cost, key)
        # <= so a leaf identical to the incumbent is adopted as well
        if cand <= (best[0], best[1], best[2]):
            best[0], best[1], best[2], best[3] = unplaced, ev.cost, key, choice

    def dfs(i: int, cost: float, unplaced: int) -> None:
        stats.nodes_expanded += 1
        if unplaced > best[0]:
            return
        if unplaced == best[0] and _worse(cost + suffix[i], best[1]):
            return
        if i == n:
            leaf(unplaced)
            return
        f = order[i]
        for o in opts[i]:
            d = o.device
            t = cursor[d]
            extra = []
            cold = problem.is_cold(d, f.app_id) and (d, f.app_id) not in started
            dev = problem.device(d)
            if cold:
                t += dev.startup_latency
                extra.append(dev.startup_energy)
            wake = d in problem.powered_off and d not in woken
            if wake:
                extra.append(dev.startup_energy)
            end = t + o.cost.duration
            late = end - deadlines[i]
            if late > 0:
                if hard:
                    continue
                extra.append(problem.penalty_j_per_us * late)
            prev = cursor[d]
            cursor[d] = end
            if cold:
                started.add((d, f.app_id))
            if wake:
                woken.add(d)
            chosen[i] = o
            dfs(i + 1, cost + o.cost.total + sum(extra), unplaced)
            chosen[i] = None
            cursor[d] = prev
            if cold:
                started.discard((d, f.app_id))
            if wake:
                woken.discard(d)
        if hard or not opts[i]:
            dfs(i + 1, cost, unplaced + 1)

    dfs(0, 0.0, 0)
    stats.wall_time_s = time.perf_counter() - t0
    if best[3] is None:
        # only reachable when no function can be placed at all
        return to_assignment(problem, {f.id: None for f in problem.functions}, stats)
    return to_assignment(problem, best[3], stats)


def solve_brute_force(problem: PlacementProblem) -> Assignment:
    """Enumerate every combination of edges (or unplaced, in hard mode)."""
    t0 = time.perf_counter()
    stats = SolverStats(solver="brute_force")
    fs = problem.functions
    hard = problem.sla_mode == "hard"
    choices = []
    for f in fs:
        opts: list[Optional[Option]] = list(options_for(problem, f))
        if hard or not opts:
            opts.append(None)
        choices.append(opts)
    best = None
    for combo in itertools.product(*choices):
        stats.nodes_expanded += 1
        choice = {f.id: o for f, o in zip(fs, combo)}
        ev = evaluate(problem, choice)
        if not ev.valid:
            continue
        key = tuple(o.key if o is not None else UNPLACED_KEY for o in combo)
        cand = (ev.unplaced, ev.cost, key)
        if best is None or cand < best[0]:
            best = (cand, choice)
    stats.wall_time_s = time.perf_counter() - t0
    return to_assignment(problem, best[1], stats)


def pareto_sweep(
    problem: PlacementProblem,
    deadline_scales: Sequence[float],
    solver: Callable[[PlacementProblem], Assignment] = solve_exact,
) -> list[tuple[float, float]]:
    """Optimal cost with every deadline stretched by each scale.

    A point where some function cannot be placed reports an infinite cost,
    so the curve is non-increasing whenever the solver is exact.
    """
    scales = list(deadline_scales)
    if any(s < 0 for s in scales):
        raise DomainError("deadline scales must be >= 0")
    if scales != sorted(scales):
        raise DomainError("deadline scales must be sorted ascending")
    out = []
    for s in scales:
        a = solver(problem.with_deadline_scale(s))
        out.append((s, a.total_cost if a.complete else math.inf))
    return out
