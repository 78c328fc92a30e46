"""Seeded random placement instances shaped like the three-app, five-device example."""

from __future__ import annotations

import math

from ..hardware import ComputeDevice, StorageMedium
from ..workload import SLA, MicroFunction, substream
from .model import PlacementProblem, effective_duration, media_choices, media_map, options_for

APP_OBJECTS = {
    "A1": ("A11", "A12", "A13"),
    "A2": ("A21",),
    "A3": (),
}
DEVICE_KINDS = ("CPU", "CPU", "GPU", "FPGA", "FPGA")


def _devices(rng, n: int) -> list[ComputeDevice]:
    out = []
    for i in range(n):
        kind = DEVICE_KINDS[i % len(DEVICE_KINDS)]
        if kind == "CPU":
            peak, cap, lat, e = rng.uniform(120, 250), rng.uniform(0.8e9, 1.5e9), 0, 0.0
        elif kind == "GPU":
            peak, cap, lat, e = rng.uniform(200, 350), rng.uniform(0.8e9, 1.5e9), int(rng.integers(0, 200)), float(rng.uniform(0, 0.02))
        else:
            peak, cap, lat, e = rng.uniform(15, 40), rng.uniform(0.2e9, 0.5e9), int(rng.integers(100, 800)), float(rng.uniform(0.001, 0.02))
        out.append(ComputeDevice(
            id=f"R{i + 1}", kind=kind, peak_power=float(peak), capacity=float(cap),
            idle_fraction=float(rng.uniform(0.3, 0.6)), startup_latency=lat, startup_energy=e,
        ))
    return out


def _media(rng, n: int) -> list[StorageMedium]:
    base = [
        dict(tier="DRAM", apb=(2e-10, 5e-10), ipb=(1e-10, 3e-10), p50=(0.1, 0.3), tail=(0.5, 2.0), bw=(10e9, 20e9), pen=(1.0, 3.0)),
        dict(tier="SSD", apb=(1e-9, 3e-9), ipb=(1e-13, 1e-12), p50=(20, 60), tail=(80, 200), bw=(1e9, 3e9), pen=(2.0, 6.0)),
    ]
    out = []
    for i in range(n):
        b = base[i % 2]
        p50 = float(rng.uniform(*b["p50"]))
        out.append(StorageMedium(
            id=f"M{i + 1}", tier=b["tier"], capacity=1 << 34,
            active_power_per_bw=float(rng.uniform(*b["apb"])), idle_power_per_byte=float(rng.uniform(*b["ipb"])),
            access_latency_p50=p50, access_latency_tail=max(p50, float(rng.uniform(*b["tail"]))),
            bandwidth=float(rng.uniform(*b["bw"])), remote_access_penalty=float(rng.uniform(*b["pen"])),
        ))
    return out


def random_problem(
    seed: int,
    n_functions: int = 6,
    n_devices: int = 5,
    n_media: int = 2,
    replica_probability: float = 0.3,
    tightness: tuple[float, float] = (1.2, 4.0),
    sla_mode: str = "hard",
    penalty_j_per_us: float = 1e-4,
    max_combinations: int | None = None,
) -> PlacementProblem:
    """Random instance: apps A1..A3, devices R1..Rn, media M1..Mm.

    Deadlines are `tightness` times the function's fastest standalone
    duration, so some edges are infeasible and devices contend. With
    `max_combinations`, the instance is re-drawn (from the same stream)
    until enumeration_size stays within it.
    """
    rng = substream(seed, "placement/instance")
    devices = _devices(rng, n_devices)
    media = _media(rng, n_media)
    for _ in range(1000):
        p = _draw(rng, devices, media, n_functions, replica_probability, tightness, sla_mode, penalty_j_per_us)
        if max_combinations is None or enumeration_size(p) <= max_combinations:
            return p
    raise ValueError(f"no instance within {max_combinations} combinations after 1000 draws")


def enumeration_size(p: PlacementProblem) -> int:
    """Assignments an exhaustive search visits: every edge plus 'unplaced', per function."""
    return math.prod(len(options_for(p, f)) + 1 for f in p.functions)


def _draw(rng, devices, media, n_functions, replica_probability, tightness, sla_mode, penalty_j_per_us) -> PlacementProblem:
    n_media = len(media)
    now = 10_000
    window = 1_000
    locations = {}
    for objs in APP_OBJECTS.values():
        for o in objs:
            if n_media > 1 and rng.random() < replica_probability:
                locations[o] = tuple(m.id for m in media[:2])
            else:
                locations[o] = (media[int(rng.integers(0, n_media))].id,)

    apps = sorted(APP_OBJECTS)
    draft = []
    for i in range(n_functions):
        app = apps[int(rng.integers(0, len(apps)))]
        speedup = {"CPU": 1.0}
        if app != "A3" or rng.random() < 0.5:
            speedup["GPU"] = float(rng.uniform(1.0, 4.0))
        if app == "A1" or rng.random() < 0.4:
            speedup["FPGA"] = float(rng.uniform(0.8, 6.0))
        reads = tuple((o, int(rng.integers(4_096, 2_000_000))) for o in APP_OBJECTS[app])
        writes = ((APP_OBJECTS[app][0], int(rng.integers(1_024, 200_000))),) if APP_OBJECTS[app] and rng.random() < 0.5 else ()
        work = float(rng.uniform(2e5, 2e6))
        arrival = int(rng.integers(now - 3 * window, now + 1))
        draft.append((f"a{i:02d}", app, arrival, work, speedup, reads, writes))

    local = {d.id: frozenset({media[0].id}) for d in devices if d.kind.value == "CPU"}
    available = {d.id: now + int(rng.integers(0, 2 * window)) for d in devices if rng.random() < 0.3}
    warm = {d.id: frozenset(a for a in apps if rng.random() < 0.5) for d in devices}
    off = frozenset(d.id for d in devices if d.id not in available and rng.random() < 0.15)
    skeleton = PlacementProblem(
        functions=(), devices=tuple(devices), media=tuple(media), object_locations=locations,
        now=now, window_end=now + window, available_from=available, warm=warm, powered_off=off, local_media=local,
        network_j_per_byte=float(rng.uniform(1e-10, 1e-9)), sla_mode=sla_mode, penalty_j_per_us=penalty_j_per_us,
    )

    functions = []
    for fid, app, arrival, work, speedup, reads, writes in draft:
        probe = MicroFunction(fid, app, arrival, work, speedup, SLA(1), reads, writes)
        fastest = min(
            effective_duration(probe, d, media_map(skeleton, mc), skeleton.local_media.get(d.id, frozenset()))
            for d in devices if probe.speedup_on(d) is not None
            for mc in media_choices(skeleton, probe)
        )
        slack_factor = float(rng.uniform(*tightness))
        deadline = max(1, int(now - arrival + fastest * slack_factor))
        functions.append(MicroFunction(fid, app, arrival, work, speedup, SLA(deadline), reads, writes))

    kw = {k: getattr(skeleton, k) for k in PlacementProblem.__dataclass_fields__}
    kw["functions"] = tuple(functions)
    return PlacementProblem(**kw)
