"""Hardware catalogs (YAML or JSON) and carbon-intensity CSV files."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .hardware import (
    CarbonIntensitySeries,
    ComputeDevice,
    DomainError,
    StorageMedium,
    calibrate_embodied_rate,
)
from .workload import DataObject, MicroFunction


class CatalogError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


_DEVICE_KEYS = {"id", "kind", "peak_power", "capacity", "idle_fraction", "startup_latency", "startup_energy", "embodied_rate"}
_MEDIUM_KEYS = {
    "id", "tier", "capacity", "active_power_per_bw", "idle_power_per_byte", "access_latency_p50",
    "access_latency_tail", "bandwidth", "remote_access_penalty",
}
_OBJECT_KEYS = {"id", "size", "locations"}
_TOP_KEYS = {"devices", "media", "objects", "locality", "network_j_per_byte"}


@dataclass(frozen=True)
class Catalog:
    devices: tuple[ComputeDevice, ...]
    media: tuple[StorageMedium, ...]
    objects: tuple[DataObject, ...] = ()
    object_locations: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    locality: Mapping[str, frozenset] = field(default_factory=dict)
    network_j_per_byte: float = 0.0

    def device(self, did: str) -> ComputeDevice:
        for d in self.devices:
            if d.id == did:
                return d
        raise KeyError(did)

    def resident_bytes(self) -> dict[str, int]:
        """Bytes stored on each medium, every replica counted."""
        out = {m.id: 0 for m in self.media}
        sizes = {o.id: o.size for o in self.objects}
        for o, locs in self.object_locations.items():
            for m in locs:
                out[m] += sizes[o]
        return out

    def trace_problems(self, functions: list[MicroFunction]) -> list[str]:
        out = []
        devs = list(self.devices)
        for f in functions:
            for o in f.objects():
                if o not in self.object_locations:
                    out.append(f"function {f.id!r} touches object {o!r} missing from the catalog")
            if not any(f.speedup_on(d) is not None for d in devs):
                out.append(f"function {f.id!r} has no speedup for any catalog device")
        return out


def _num(v: Any, key: str, problems: list[str], where: str):
    # YAML 1.1 reads "1e9" as a string; accept any numeric text
    if isinstance(v, bool):
        problems.append(f"{where}: {key} must be a number")
        return None
    if isinstance(v, (int, float)):
        return v
    try:
        return float(v)
    except (TypeError, ValueError):
        problems.append(f"{where}: {key} must be a number, got {v!r}")
        return None


def _entries(raw: Any, name: str, problems: list[str]) -> list[Mapping]:
    if raw is None:
        return []
    if not isinstance(raw, list) or not all(isinstance(x, Mapping) for x in raw):
        problems.append(f"{name} must be a list of mappings")
        return []
    return raw


def catalog_from_dict(d: Mapping) -> Catalog:
    """Build a catalog, collecting every problem before failing.

    `embodied_rate: auto` calibrates the rate so embodied carbon is a third
    of the device's lifecycle carbon at the reference operating point.
    """
    problems: list[str] = []
    if not isinstance(d, Mapping):
        raise CatalogError(["catalog must be a mapping"])
    unknown = sorted(set(d) - _TOP_KEYS)
    if unknown:
        problems.append(f"unknown top-level keys {unknown}")

    devices = []
    for i, raw in enumerate(_entries(d.get("devices"), "devices", problems)):
        where = f"devices[{i}]"
        bad = sorted(set(raw) - _DEVICE_KEYS)
        if bad:
            problems.append(f"{where}: unknown keys {bad}")
            continue
        kw = dict(raw)
        auto = kw.get("embodied_rate") == "auto"
        if auto:
            kw["embodied_rate"] = 0.0
        for k in ("peak_power", "capacity", "idle_fraction", "startup_latency", "startup_energy", "embodied_rate"):
            if k in kw:
                kw[k] = _num(kw[k], k, problems, where)
        if "startup_latency" in kw and kw["startup_latency"] is not None:
            kw["startup_latency"] = int(kw["startup_latency"])
        if any(v is None for v in kw.values()):
            continue
        try:
            dev = ComputeDevice(**kw)
            if auto:
                kw["embodied_rate"] = calibrate_embodied_rate(dev)
                dev = ComputeDevice(**kw)
            devices.append(dev)
        except (DomainError, TypeError, ValueError) as e:
            problems.append(f"{where}: {e}")

    media = []
    for i, raw in enumerate(_entries(d.get("media"), "media", problems)):
        where = f"media[{i}]"
        bad = sorted(set(raw) - _MEDIUM_KEYS)
        if bad:
            problems.append(f"{where}: unknown keys {bad}")
            continue
        kw = dict(raw)
        for k in _MEDIUM_KEYS - {"id", "tier"}:
            if k in kw:
                kw[k] = _num(kw[k], k, problems, where)
        if kw.get("capacity") is not None:
            kw["capacity"] = int(kw["capacity"])
        if any(v is None for v in kw.values()):
            continue
        try:
            media.append(StorageMedium(**kw))
        except (DomainError, TypeError, ValueError) as e:
            problems.append(f"{where}: {e}")

    media_ids = {m.id for m in media}
    device_ids = {x.id for x in devices}
    if len(media_ids) != len(media):
        problems.append("duplicate medium ids")
    if len(device_ids) != len(devices):
        problems.append("duplicate device ids")
    if not devices:
        problems.append("catalog has no devices")

    objects, locations = [], {}
    for i, raw in enumerate(_entries(d.get("objects"), "objects", problems)):
        where = f"objects[{i}]"
        bad = sorted(set(raw) - _OBJECT_KEYS)
        if bad:
            problems.append(f"{where}: unknown keys {bad}")
            continue
        locs = raw.get("locations") or []
        if isinstance(locs, str):
            locs = [locs]
        missing = [m for m in locs if m not in media_ids]
        if not locs or missing:
            problems.append(f"{where}: locations must name known media, got {list(locs)}")
            continue
        size = _num(raw.get("size"), "size", problems, where)
        if size is None:
            continue
        try:
            objects.append(DataObject(str(raw["id"]), int(size), str(locs[0])))
            locations[str(raw["id"])] = tuple(sorted(str(m) for m in locs))
        except (KeyError, DomainError) as e:
            problems.append(f"{where}: {e}")

    locality = {}
    raw_loc = d.get("locality") or {}
    if not isinstance(raw_loc, Mapping):
        problems.append("locality must map device id to a list of media ids")
        raw_loc = {}
    for did, mids in raw_loc.items():
        if did not in device_ids:
            problems.append(f"locality names unknown device {did!r}")
            continue
        mids = [mids] if isinstance(mids, str) else list(mids or [])
        unknown_m = [m for m in mids if m not in media_ids]
        if unknown_m:
            problems.append(f"locality[{did}] names unknown media {unknown_m}")
            continue
        locality[did] = frozenset(mids)

    njpb = _num(d.get("network_j_per_byte", 0.0), "network_j_per_byte", problems, "catalog")
    if njpb is not None and njpb < 0:
        problems.append("network_j_per_byte must be >= 0")
    if problems:
        raise CatalogError(problems)
    return Catalog(
        devices=tuple(sorted(devices, key=lambda x: x.id)),
        media=tuple(sorted(media, key=lambda m: m.id)),
        objects=tuple(sorted(objects, key=lambda o: o.id)),
        object_locations=dict(sorted(locations.items())),
        locality=locality,
        network_j_per_byte=float(njpb),
    )


def load_catalog(path) -> Catalog:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise CatalogError([f"{path}: cannot parse: {e}"]) from None
    return catalog_from_dict(data)


def load_intensity_csv(path) -> CarbonIntensitySeries:
    """Read `timestamp_us,intensity_g_per_kwh` rows into a step series."""
    samples = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["timestamp_us", "intensity_g_per_kwh"]:
        raise DomainError(f"{path}: header must be timestamp_us,intensity_g_per_kwh")
    for i, row in enumerate(rows[1:], 2):
        if not row:
            continue
        try:
            samples.append((int(row[0]), float(row[1])))
        except (ValueError, IndexError):
            raise DomainError(f"{path}:{i}: malformed row {row}") from None
    return CarbonIntensitySeries(tuple(samples))


def write_intensity_csv(series: CarbonIntensitySeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_us", "intensity_g_per_kwh"])
        for t, v in series.samples:
            w.writerow([t, repr(v)])


def step_series(high: float, at: int, factor: float = 0.5, start: int = 0) -> CarbonIntensitySeries:
    """`high` until `at`, then `high * factor`."""
    return CarbonIntensitySeries(((start, high), (at, high * factor)))


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(__file__).parent / "data" / name


def default_catalog() -> Catalog:
    return load_catalog(bundled("catalog.yaml"))


def maybe_series(path: Optional[str]) -> CarbonIntensitySeries:
    from .hardware import REFERENCE_INTENSITY

    return load_intensity_csv(path) if path else CarbonIntensitySeries.constant(REFERENCE_INTENSITY)
