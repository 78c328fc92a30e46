"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math

import numpy as np

from carbonsched.placement import PlacementProblem, options_for


def enumerate_optimum(problem: PlacementProblem):
    """Exhaustive search over every (edge or unplaced) combination, vectorised with numpy.

    Re-derives device sequencing (deadline order, one cold start per
    device/app, one wake per powered-off device) without the package's
    evaluator. Returns (unplaced, cost, key) of the lexicographic optimum,
    with the cost recomputed by math.fsum so it is comparable bitwise.
    """
    p = problem
    fns = list(p.functions)
    if not fns:
        return 0, 0.0, ()
    hard = p.sla_mode == "hard"
    opts = [options_for(p, f) + ([None] if hard else []) for f in fns]
    counts = [len(o) for o in opts]
    n_combo = math.prod(counts)
    combos = np.stack(np.unravel_index(np.arange(n_combo), counts), axis=1)

    dev_ids = [d.id for d in p.devices]
    dev_index = {d: i for i, d in enumerate(dev_ids)}
    apps = sorted({f.app_id for f in fns})
    order = sorted(range(len(fns)), key=lambda i: (fns[i].arrival + p.deadline_scale * fns[i].sla.deadline, fns[i].id))

    base = np.array([max(p.now, p.available_from.get(d, p.now)) for d in dev_ids], dtype=np.int64)
    wake_lat = np.array([p.device(d).startup_latency if d in p.powered_off else 0 for d in dev_ids], dtype=np.int64)
    cursor = np.tile(base + wake_lat, (n_combo, 1))
    used = np.zeros((n_combo, len(dev_ids)), dtype=bool)
    started = np.zeros((n_combo, len(dev_ids), len(apps)), dtype=bool)
    cost = np.zeros(n_combo)
    valid = np.ones(n_combo, dtype=bool)
    unplaced = np.zeros(n_combo, dtype=np.int64)
    rows = np.arange(n_combo)

    for i in order:
        f = fns[i]
        a = apps.index(f.app_id)
        o = opts[i]
        dev = np.array([dev_index[x.device] if x else -1 for x in o])[combos[:, i]]
        dur = np.array([x.cost.duration if x else 0 for x in o], dtype=np.int64)[combos[:, i]]
        c = np.array([x.cost.total if x else 0.0 for x in o])[combos[:, i]]
        placed = dev >= 0
        unplaced += ~placed
        d = np.where(placed, dev, 0)
        cold_dev = np.array([
            (p.device(x).startup_latency > 0 or p.device(x).startup_energy > 0) and f.app_id not in p.warm.get(x, frozenset())
            for x in dev_ids
        ])
        lat = np.array([p.device(x).startup_latency for x in dev_ids], dtype=np.int64)
        e_start = np.array([p.device(x).startup_energy for x in dev_ids])
        needs = placed & cold_dev[d] & ~started[rows, d, a]
        t = cursor[rows, d] + np.where(needs, lat[d], 0)
        cost += np.where(needs, e_start[d], 0.0)
        started[rows, d, a] |= needs
        end = t + dur
        late = end - (f.arrival + p.deadline_scale * f.sla.deadline)
        if hard:
            valid &= ~(placed & (late > 0))
        else:
            cost += np.where(placed & (late > 0), p.penalty_j_per_us * np.maximum(late, 0), 0.0)
        cost += np.where(placed, c, 0.0)
        cursor[rows, d] = np.where(placed, end, cursor[rows, d])
        used[rows, d] |= placed

    wake_e = np.array([p.device(x).startup_energy if x in p.powered_off else 0.0 for x in dev_ids])
    cost += (used * wake_e).sum(axis=1)

    idx = np.flatnonzero(valid)
    fewest = unplaced[idx].min()
    idx = idx[unplaced[idx] == fewest]
    m = cost[idx].min()
    near = idx[cost[idx] <= m + 1e-9 * abs(m) + 1e-300]

    best = None
    for k in near:
        choice = {fns[i].id: opts[i][combos[k, i]] for i in range(len(fns))}
        exact = _exact_cost(p, fns, order, choice)
        key = tuple((0, choice[f.id].device, choice[f.id].media) if choice[f.id] else (1,) for f in fns)
        cand = (exact, key)
        if best is None or cand < best:
            best = cand
    return int(fewest), best[0], best[1]


def _exact_cost(p: PlacementProblem, fns, order, choice) -> float:
    """fsum of edge totals, start-up/wake charges and penalties for one assignment."""
    terms = []
    cursor, started, used = {}, set(), set()
    for i in order:
        f = fns[i]
        o = choice[f.id]
        if o is None:
            continue
        d = p.device(o.device)
        if o.device not in cursor:
            cursor[o.device] = max(p.now, p.available_from.get(o.device, p.now)) + (
                d.startup_latency if o.device in p.powered_off else 0
            )
        if o.device in p.powered_off and o.device not in used and d.startup_energy:
            terms.append(d.startup_energy)
        used.add(o.device)
        cold = (d.startup_latency > 0 or d.startup_energy > 0) and f.app_id not in p.warm.get(o.device, frozenset())
        if cold and (o.device, f.app_id) not in started:
            started.add((o.device, f.app_id))
            cursor[o.device] += d.startup_latency
            terms.append(d.startup_energy)
        end = cursor[o.device] + o.cost.duration
        late = end - (f.arrival + p.deadline_scale * f.sla.deadline)
        if late > 0 and p.sla_mode == "soft":
            terms.append(p.penalty_j_per_us * late)
        terms.append(o.cost.total)
        cursor[o.device] = end
    return math.fsum(terms)


def pareto_brute(points):
    """O(n^2) non-dominated filter; equal points keep the smallest label."""
    out = []
    for q in points:
        dominated = any(
            p.energy <= q.energy and p.tail_latency <= q.tail_latency and (p.energy < q.energy or p.tail_latency < q.tail_latency)
            for p in points
        )
        tie_loser = any(
            p.energy == q.energy and p.tail_latency == q.tail_latency and p.label < q.label for p in points
        )
        if not dominated and not tie_loser:
            out.append(q)
    # identical (label, coordinates) duplicates collapse to one
    seen, uniq = set(), []
    for q in sorted(out, key=lambda p: (p.energy, p.tail_latency, p.label)):
        k = (q.label, q.energy, q.tail_latency)
        if k not in seen:
            seen.add(k)
            uniq.append(q)
    return uniq


def tiering_brute(objects, stats, media, sla, energy_budget=None, horizon_s=1.0):
    """Every object->medium map; the cheapest feasible by (fsum power, key), or None."""
    import itertools

    from carbonsched.interchange import tier_latency, tier_power

    objs = sorted(objects, key=lambda o: o.id)
    meds = sorted(media, key=lambda m: m.id)
    best = None
    for combo in itertools.product(meds, repeat=len(objs)):
        ok = True
        cap, bw = {}, {}
        for o, m in zip(objs, combo):
            s = stats[o.id]
            if sla is not None and s.accesses_per_s > 0 and tier_latency(s, m) > sla.deadline:
                ok = False
                break
            cap[m.id] = cap.get(m.id, 0) + o.size
            bw[m.id] = bw.get(m.id, 0.0) + s.bandwidth
        if not ok or any(cap[m] > mm.capacity for mm in meds for m in cap if m == mm.id):
            continue
        if any(bw[m] > mm.bandwidth for mm in meds for m in bw if m == mm.id):
            continue
        power = math.fsum(tier_power(o, stats[o.id], m) for o, m in zip(objs, combo))
        if energy_budget is not None and power * horizon_s > energy_budget:
            continue
        cand = (power, tuple(m.id for m in combo))
        if best is None or cand < best:
            best = cand
    if best is None:
        return None
    return {o.id: m for o, m in zip(objs, best[1])}
