"""Interchangeable compute and memory: energy/tail-latency frontiers, hybrid CPU+FPGA
load splitting, and SLA-constrained data tiering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional, Sequence

from .hardware import US_PER_S, ComputeDevice, DomainError, StorageMedium, power_draw
from .workload import SLA, DataObject


@dataclass(frozen=True)
class TradeoffPoint:
    label: str
    energy: float
    tail_latency: float

    def __post_init__(self):
        if self.energy < 0 or self.tail_latency < 0:
            raise DomainError(f"trade-off point {self.label!r} has negative coordinates")


def dominates(p: TradeoffPoint, q: TradeoffPoint) -> bool:
    return p.energy <= q.energy and p.tail_latency <= q.tail_latency and (
        p.energy < q.energy or p.tail_latency < q.tail_latency
    )


def pareto_frontier(points: Iterable[TradeoffPoint]) -> list[TradeoffPoint]:
    """Non-dominated points in ascending energy.

    Of several identical points only the smallest label survives.
    """
    best_tail = math.inf
    out = []
    for p in sorted(points, key=lambda p: (p.energy, p.tail_latency, p.label)):
        if p.tail_latency < best_tail:
            out.append(p)
            best_tail = p.tail_latency
    return out


def write_frontier_csv(points: Sequence[TradeoffPoint], stream: IO[str], fmt=repr) -> None:
    front = {(p.label, p.energy, p.tail_latency) for p in pareto_frontier(points)}
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["label", "energy_j", "tail_us", "on_frontier"])
    for p in sorted(points, key=lambda p: (p.energy, p.tail_latency, p.label)):
        w.writerow([p.label, fmt(p.energy), fmt(p.tail_latency), str((p.label, p.energy, p.tail_latency) in front).lower()])


# -- hybrid compute ---------------------------------------------------------

@dataclass(frozen=True)
class LoadProfile:
    """Piecewise-constant request rate; each sample holds until the next.

    The last sample holds until `end` (default: one more sampling interval,
    or one second for a single sample).
    """

    samples: tuple[tuple[int, float], ...]
    end: Optional[int] = None

    def __post_init__(self):
        s = tuple((int(t), float(r)) for t, r in self.samples)
        object.__setattr__(self, "samples", s)
        for i, (t, r) in enumerate(s):
            if r < 0:
                raise DomainError("rates must be >= 0")
            if i and t <= s[i - 1][0]:
                raise DomainError("timestamps must be increasing")
        if self.end is None and s:
            step = s[-1][0] - s[-2][0] if len(s) > 1 else US_PER_S
            object.__setattr__(self, "end", s[-1][0] + step)
        if s and self.end <= s[-1][0]:
            raise DomainError("profile end must follow the last sample")

    def segments(self) -> list[tuple[int, int, float]]:
        ts = [t for t, _ in self.samples] + [self.end]
        return [(ts[i], ts[i + 1], r) for i, (_, r) in enumerate(self.samples)]

    def quantile(self, q: float) -> float:
        """Time-weighted q-quantile of the rate."""
        segs = sorted(self.segments(), key=lambda s: s[2])
        total = sum(b - a for a, b, _ in segs)
        if total == 0:
            return 0.0
        acc = 0
        for a, b, r in segs:
            acc += b - a
            if acc >= q * total:
                return r
        return segs[-1][2]


@dataclass
class PoolRun:
    energy: float = 0.0
    violations: float = 0.0
    served: float = 0.0
    startup_energy: float = 0.0


@dataclass
class HybridPlan:
    baseline_rate: float
    fpga_units: float
    segments: list[tuple[int, int, float, float]] = field(default_factory=list)  # (start, end, fpga_rps, cpu_rps)
    energy: float = 0.0
    cpu_only_energy: float = 0.0
    fpga_only_energy: float = 0.0
    violations: float = 0.0
    cpu_only_violations: float = 0.0
    fpga_only_violations: float = 0.0


def _service_us(device: ComputeDevice, work: float, speedup: float) -> float:
    return work / (device.capacity * speedup) * US_PER_S


def _autoscaled_pool(
    segments: Sequence[tuple[int, int, float]],
    device: ComputeDevice,
    work: float,
    speedup: float,
    sla: SLA,
    step_us: int,
) -> PoolRun:
    """Fluid pool of identical devices that scales to demand.

    Scale-up capacity arrives after device.startup_latency; scale-down is
    immediate. A backlog is drained by asking for extra capacity sized to
    clear it within half the deadline. Requests whose queueing delay plus
    service time exceed the deadline count as violations.
    """
    thr = device.capacity * speedup / work  # requests/s per device-equivalent
    service = _service_us(device, work, speedup)
    lag = device.startup_latency
    drain_s = max(sla.deadline / 2, 1.0) / US_PER_S
    out = PoolRun()
    if not segments:
        return out
    cap = segments[0][2]  # pre-provisioned for the opening rate, start-up paid once
    out.startup_energy = device.startup_energy * cap / thr
    pending: list[tuple[float, float]] = []
    backlog = 0.0
    energy_terms, viol_terms = [], []
    for a, b, rate in segments:
        t = a
        while t < b:
            dt_us = min(step_us, b - t)
            dt = dt_us / US_PER_S
            while pending and pending[0][0] <= t:
                cap += pending.pop(0)[1]
            target = rate + backlog / drain_s
            in_flight = sum(x for _, x in pending)
            if target > cap + in_flight:
                extra = target - cap - in_flight
                if lag == 0:
                    cap += extra
                else:
                    pending.append((t + lag, extra))
                out.startup_energy += device.startup_energy * extra / thr
            elif target < cap:
                cap = target
            arrivals = rate * dt
            served = min(backlog + arrivals, cap * dt)
            backlog = backlog + arrivals - served
            units = cap / thr
            util = served / (cap * dt) if cap > 0 else 0.0
            starting = sum(x for _, x in pending) / thr
            energy_terms.append((units * power_draw(device, min(1.0, util)) + starting * device.idle_power) * dt)
            delay = backlog / cap * US_PER_S if cap > 0 else (math.inf if backlog > 0 else 0.0)
            if arrivals > 0 and delay + service > sla.deadline:
                viol_terms.append(arrivals)
            out.served += served
            t += dt_us
    out.energy = math.fsum(energy_terms) + out.startup_energy
    out.violations = math.fsum(viol_terms)
    return out


def split_hybrid(
    profile: LoadProfile,
    cpu: ComputeDevice,
    fpga: ComputeDevice,
    sla: SLA,
    work: float,
    cpu_speedup: float = 1.0,
    fpga_speedup: float = 1.0,
    baseline_percentile: float = 0.10,
    max_fpga_units: Optional[float] = None,
    step_us: Optional[int] = None,
) -> tuple[float, HybridPlan]:
    """Route the stable part of the load (a low percentile of the rate) to FPGAs and bursts to CPUs.

    The FPGA pool is sized once for the baseline rate and stays configured
    for the whole profile, paying its start-up energy once. Energies of the
    CPU-only and FPGA-only alternatives are reported alongside.
    """
    segs = [s for s in profile.segments() if s[1] > s[0]]
    baseline = profile.quantile(baseline_percentile)
    if not segs or max(r for _, _, r in segs) == 0:
        return 0.0, HybridPlan(0.0, 0.0)
    thr_f = fpga.capacity * fpga_speedup / work
    units_f = baseline / thr_f
    if max_fpga_units is not None and units_f > max_fpga_units:
        raise DomainError(f"FPGA pool of {max_fpga_units} units cannot sustain {baseline} req/s")
    if step_us is None:
        lags = [x for x in (cpu.startup_latency, fpga.startup_latency) if x > 0]
        step_us = max(10, min(lags + [sla.deadline]) // 4)

    plan = HybridPlan(baseline, units_f)
    fpga_terms = [fpga.startup_energy * units_f]
    fpga_service = _service_us(fpga, work, fpga_speedup)
    fpga_viol = []
    excess = []
    for a, b, r in segs:
        on_f = min(r, baseline)
        plan.segments.append((a, b, on_f, r - on_f))
        excess.append((a, b, r - on_f))
        if units_f > 0:
            fpga_terms.append(units_f * power_draw(fpga, on_f / baseline) * (b - a) / US_PER_S)
            if fpga_service > sla.deadline:
                fpga_viol.append(on_f * (b - a) / US_PER_S)
    cpu_part = _autoscaled_pool(excess, cpu, work, cpu_speedup, sla, step_us)
    plan.energy = math.fsum(fpga_terms) + cpu_part.energy
    plan.violations = math.fsum(fpga_viol) + cpu_part.violations

    cpu_only = _autoscaled_pool(segs, cpu, work, cpu_speedup, sla, step_us)
    fpga_only = _autoscaled_pool(segs, fpga, work, fpga_speedup, sla, step_us)
    plan.cpu_only_energy, plan.cpu_only_violations = cpu_only.energy, cpu_only.violations
    plan.fpga_only_energy, plan.fpga_only_violations = fpga_only.energy, fpga_only.violations
    return baseline, plan


def bursty_profile(
    base: float,
    peak: float,
    period_us: int,
    burst_us: int,
    duration_us: int,
    jitter: float = 0.0,
    seed: int = 0,
) -> LoadProfile:
    """Square-wave load: `base` req/s with bursts to `peak` at the start of every period."""
    from .workload import substream

    rng = substream(seed, "profile")
    samples = []
    t = 0
    while t < duration_us:
        hi = peak * (1.0 + jitter * rng.uniform(-1, 1)) if jitter else peak
        lo = base * (1.0 + jitter * rng.uniform(-1, 1)) if jitter else base
        samples.append((t, max(hi, lo)))
        if burst_us < period_us and t + burst_us < duration_us:
            samples.append((t + burst_us, lo))
        t += period_us
    return LoadProfile(tuple(samples), end=duration_us)


# -- memory tiering ---------------------------------------------------------

@dataclass(frozen=True)
class AccessStats:
    reads_per_s: float
    writes_per_s: float
    bytes_per_access: float

    @property
    def accesses_per_s(self) -> float:
        return self.reads_per_s + self.writes_per_s

    @property
    def bandwidth(self) -> float:
        return self.accesses_per_s * self.bytes_per_access


class TieringInfeasible(ValueError):
    def __init__(self, constraint: str, detail: str):
        super().__init__(f"{constraint}: {detail}")
        self.constraint = constraint


EXACT_TIERING_LIMIT = 10


def tier_power(obj: DataObject, stats: AccessStats, m: StorageMedium) -> float:
    """Steady-state watts of keeping `obj` on `m`: resident bytes plus access traffic."""
    return m.idle_power_per_byte * obj.size + m.active_power_per_bw * stats.bandwidth


def tier_latency(stats: AccessStats, m: StorageMedium) -> float:
    return m.access_latency_tail + stats.bytes_per_access / m.bandwidth * US_PER_S


def _latency_ok(stats: AccessStats, m: StorageMedium, sla: Optional[SLA]) -> bool:
    # an object nobody touches has no access latency to bound
    if sla is None or stats.accesses_per_s == 0:
        return True
    return tier_latency(stats, m) <= sla.deadline


def tier_data(
    objects: Sequence[DataObject],
    access_stats: Mapping[str, AccessStats],
    media: Sequence[StorageMedium],
    sla: Optional[SLA] = None,
    energy_budget: Optional[float] = None,
    horizon_s: float = 1.0,
) -> dict[str, str]:
    """Cheapest object -> medium map within the latency bound and each medium's limits.

    Exact (branch and bound) up to EXACT_TIERING_LIMIT objects, greedy by
    ascending cheapest-medium power beyond. `energy_budget` is joules over
    `horizon_s` seconds of steady state.
    """
    if sum(o.size for o in objects) > sum(m.capacity for m in media):
        raise TieringInfeasible("capacity", "objects do not fit in the combined media")
    objs = sorted(objects, key=lambda o: o.id)
    meds = sorted(media, key=lambda m: m.id)
    zero = AccessStats(0.0, 0.0, 0.0)
    stats = {o.id: access_stats.get(o.id, zero) for o in objs}
    allowed = {o.id: [m for m in meds if _latency_ok(stats[o.id], m, sla)] for o in objs}
    for o in objs:
        if not allowed[o.id]:
            raise TieringInfeasible("latency", f"no medium serves {o.id!r} within {sla.deadline} us")
    power = {(o.id, m.id): tier_power(o, stats[o.id], m) for o in objs for m in meds}

    if len(objs) <= EXACT_TIERING_LIMIT:
        result = _tier_exact(objs, meds, allowed, stats, power)
    else:
        result = _tier_greedy(objs, meds, allowed, stats, power)
    if result is None:
        raise TieringInfeasible("capacity", "no placement respects media capacity and bandwidth")
    if energy_budget is not None:
        energy = math.fsum(power[(o, m)] for o, m in result.items()) * horizon_s
        if energy > energy_budget:
            raise TieringInfeasible("energy_budget", f"cheapest feasible placement needs {energy} J > {energy_budget} J")
    return result


def _tier_exact(objs, meds, allowed, stats, power) -> Optional[dict[str, str]]:
    n = len(objs)
    floor = [min(power[(o.id, m.id)] for m in allowed[o.id]) for o in objs]
    suffix = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + floor[i]
    cap_left = {m.id: float(m.capacity) for m in meds}
    bw_left = {m.id: float(m.bandwidth) for m in meds}
    best: list = [math.inf, None]
    chosen: list[str] = [""] * n

    def dfs(i: int, cost: float) -> None:
        if cost + suffix[i] - best[0] > 1e-12 * abs(best[0]):
            return
        if i == n:
            total = math.fsum(power[(objs[k].id, chosen[k])] for k in range(n))
            key = tuple(chosen)
            if best[1] is None or (total, key) < (best[0], best[1]):
                best[0], best[1] = total, key
            return
        o = objs[i]
        for m in allowed[o.id]:
            bw = stats[o.id].bandwidth
            if o.size > cap_left[m.id] or bw > bw_left[m.id]:
                continue
            cap_left[m.id] -= o.size
            bw_left[m.id] -= bw
            chosen[i] = m.id
            dfs(i + 1, cost + power[(o.id, m.id)])
            cap_left[m.id] += o.size
            bw_left[m.id] += bw

    dfs(0, 0.0)
    if best[1] is None:
        return None
    return {objs[k].id: best[1][k] for k in range(n)}


def _tier_greedy(objs, meds, allowed, stats, power) -> Optional[dict[str, str]]:
    cap_left = {m.id: float(m.capacity) for m in meds}
    bw_left = {m.id: float(m.bandwidth) for m in meds}
    order = sorted(objs, key=lambda o: (min(power[(o.id, m.id)] for m in allowed[o.id]), o.id))
    out = {}
    for o in order:
        fits = [m for m in allowed[o.id] if o.size <= cap_left[m.id] and stats[o.id].bandwidth <= bw_left[m.id]]
        if not fits:
            return None
        m = min(fits, key=lambda m: (power[(o.id, m.id)], m.id))
        cap_left[m.id] -= o.size
        bw_left[m.id] -= stats[o.id].bandwidth
        out[o.id] = m.id
    return dict(sorted(out.items()))


def media_tradeoffs(
    obj: DataObject, stats: AccessStats, media: Sequence[StorageMedium], horizon_s: float = 1.0
) -> list[TradeoffPoint]:
    """One (energy, tail latency) point per medium for a single object."""
    return [TradeoffPoint(m.id, tier_power(obj, stats, m) * horizon_s, tier_latency(stats, m)) for m in media]
