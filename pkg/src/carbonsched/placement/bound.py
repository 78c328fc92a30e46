"""Fractional lower bound on placement cost.

Relaxing integrality lets a function spread over several edges. On each
device, every function due by deadline D must fit between the device's start
cursor and D, which gives one capacity row per (device, distinct deadline).
Those rows are dualised: for any multipliers mu >= 0

    L(mu) = sum_f min_e [cost_e + dur_e * price(device_e, D_f)] - sum mu * cap

is a valid lower bound (weak duality), so projected subgradient ascent can
stop at any iteration and still return a bound. Start-up and wake charges
are spread over every function that could share them.
"""

from __future__ import annotations

import math
from collections import Counter

from .model import PlacementProblem, options_for, prune_dominated, standalone_feasible

ITERATIONS = 150
PATIENCE = 10
# guard against last-bit rounding pushing the bound above the exact optimum
_SAFETY = 1e-12


def _shares(problem: PlacementProblem):
    per_app = Counter(f.app_id for f in problem.functions)
    nfun = max(1, len(problem.functions))
    out = {}
    for f in problem.functions:
        rows = []
        opts = prune_dominated(options_for(problem, f))
        if problem.sla_mode == "hard":
            opts = [o for o in opts if standalone_feasible(problem, f, o)]
        for o in opts:
            dev = problem.device(o.device)
            terms = [o.cost.total]
            if problem.is_cold(o.device, f.app_id):
                terms.append(dev.startup_energy / per_app[f.app_id])
            if o.device in problem.powered_off:
                terms.append(dev.startup_energy / nfun)
            rows.append((o.device, math.fsum(terms), o.cost.duration))
        if rows:
            out[f.id] = rows
    return out


def lower_bound(problem: PlacementProblem, iterations: int = ITERATIONS, upper: float | None = None) -> float:
    """Joules the lexicographic optimum (fewest unplaced, then cheapest) cannot beat.

    `upper` (a known feasible cost) sharpens the subgradient steps; the
    bound is valid without it.
    """
    rows = _shares(problem)
    if not rows:
        return 0.0
    cheapest = math.fsum(min(c for _, c, _ in r) for r in rows.values())
    if problem.sla_mode == "soft":
        return cheapest - _SAFETY * abs(cheapest)

    fdead = {f.id: problem.deadline_of(f) for f in problem.functions if f.id in rows}
    thresholds: dict[str, list[float]] = {}
    for fid, r in rows.items():
        for did, _, _ in r:
            thresholds.setdefault(did, set()).add(fdead[fid])
    thresholds = {d: sorted(v) for d, v in thresholds.items()}
    caps = {d: [D - problem.start_cursor(d) for D in ths] for d, ths in thresholds.items()}
    index = {(d, D): k for d, ths in thresholds.items() for k, D in enumerate(ths)}
    mu = {d: [0.0] * len(ths) for d, ths in thresholds.items()}
    fids = sorted(rows)

    from .heuristic import solve_heuristic

    h = solve_heuristic(problem)
    if not h.complete:
        # the optimum may leave functions out; it still places at least as
        # many as the heuristic, each costing no less than its cheapest edge
        k = len(problem.functions) - h.unplaced
        low = math.fsum(sorted(min(c for _, c, _ in r) for r in rows.values())[:k])
        return low - _SAFETY * abs(low)
    if upper is None:
        upper = h.total_cost

    def dual(mu):
        price = {}
        for d, m in mu.items():
            acc, suf = 0.0, [0.0] * len(m)
            for k in range(len(m) - 1, -1, -1):
                acc += m[k]
                suf[k] = acc
            price[d] = suf
        value_terms = []
        load = {d: [0.0] * len(m) for d, m in mu.items()}
        for fid in fids:
            D = fdead[fid]
            best = None
            for did, c, dur in rows[fid]:
                k = index[(did, D)]
                v = c + dur * price[did][k]
                if best is None or v < best[0]:
                    best = (v, did, k, dur)
            value_terms.append(best[0])
            load[best[1]][best[2]] += best[3]
        for d, m in mu.items():
            for k, x in enumerate(m):
                if x:
                    value_terms.append(-x * caps[d][k])
        # a function due at threshold k loads every row k' >= k
        grad = {}
        for d, l in load.items():
            acc, g = 0.0, []
            for k, x in enumerate(l):
                acc += x
                g.append(acc - caps[d][k])
            grad[d] = g
        return math.fsum(value_terms), grad

    best_val, grad = dual(mu)
    if upper is not None and upper <= best_val:
        return best_val - _SAFETY * abs(best_val)
    theta, stale = 1.0, 0
    val = best_val
    for _ in range(iterations):
        eff = {d: [gk if (gk > 0 or mu[d][k] > 0) else 0.0 for k, gk in enumerate(g)] for d, g in grad.items()}
        norm2 = sum(x * x for g in eff.values() for x in g)
        if norm2 == 0.0:
            break  # complementary slackness: the relaxed choice is optimal
        target = upper if upper is not None else val + max(abs(val), 1e-9) * 0.1
        step = theta * max(target - val, 1e-12 * max(1.0, abs(val))) / norm2
        mu = {d: [max(0.0, m + step * g) for m, g in zip(mu[d], eff[d])] for d in mu}
        val, grad = dual(mu)
        if val > best_val:
            best_val, stale = val, 0
        else:
            stale += 1
            if stale >= PATIENCE:
                theta, stale = theta / 2, 0
                if theta < 1e-6:
                    break
    return best_val - _SAFETY * abs(best_val)
