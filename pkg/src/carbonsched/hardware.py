"""Compute devices, storage media, power curves and carbon intensity.

Time is integer microseconds everywhere, energy is joules, carbon is grams
CO2e. Conversions to seconds happen only inside the energy integrals.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

US_PER_S = 1_000_000
J_PER_KWH = 3.6e6

DEFAULT_IDLE_FRACTION = 0.5
# Reference operating point used to calibrate default embodied-carbon rates.
REFERENCE_UTILIZATION = 0.5
REFERENCE_INTENSITY = 400.0
EMBODIED_SHARE = 1.0 / 3.0


class DeviceKind(str, enum.Enum):
    CPU = "CPU"
    GPU = "GPU"
    FPGA = "FPGA"
    OTHER = "OTHER"


class StorageTier(str, enum.Enum):
    DRAM = "DRAM"
    NVM = "NVM"
    SSD = "SSD"
    HDD = "HDD"


class DomainError(ValueError):
    """Argument outside the domain of a model function."""


@dataclass(frozen=True)
class ComputeDevice:
    id: str
    kind: DeviceKind
    peak_power: float
    capacity: float
    idle_fraction: float = DEFAULT_IDLE_FRACTION
    startup_latency: int = 0
    startup_energy: float = 0.0
    embodied_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DeviceKind(self.kind))
        problems = device_problems(self)
        if problems:
            raise DomainError(f"device {self.id!r}: " + "; ".join(problems))

    @property
    def idle_power(self) -> float:
        return self.idle_fraction * self.peak_power

    @property
    def dynamic_power(self) -> float:
        """Extra watts drawn at full load over idle."""
        return (1.0 - self.idle_fraction) * self.peak_power


def device_problems(d: ComputeDevice) -> list[str]:
    out = []
    if not d.peak_power > 0:
        out.append("peak_power must be > 0")
    if not d.capacity > 0:
        out.append("capacity must be > 0")
    if not 0.0 <= d.idle_fraction <= 1.0:
        out.append("idle_fraction must be in [0, 1]")
    if d.startup_latency < 0:
        out.append("startup_latency must be >= 0")
    if d.startup_energy < 0:
        out.append("startup_energy must be >= 0")
    if d.embodied_rate < 0:
        out.append("embodied_rate must be >= 0")
    return out


@dataclass(frozen=True)
class StorageMedium:
    id: str
    tier: StorageTier
    capacity: int
    active_power_per_bw: float
    idle_power_per_byte: float
    access_latency_p50: float
    access_latency_tail: float
    bandwidth: float
    remote_access_penalty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tier", StorageTier(self.tier))
        problems = medium_problems(self)
        if problems:
            raise DomainError(f"medium {self.id!r}: " + "; ".join(problems))

    def transfer_energy(self, nbytes: float) -> float:
        """Active energy to move `nbytes` at full bandwidth.

        Power at bandwidth b is active_power_per_bw * b and the transfer lasts
        nbytes / b seconds, so the bandwidth cancels.
        """
        return self.active_power_per_bw * nbytes

    def resident_energy(self, nbytes: float, duration_us: float) -> float:
        return self.idle_power_per_byte * nbytes * duration_us / US_PER_S


def medium_problems(m: StorageMedium) -> list[str]:
    out = []
    if not m.capacity > 0:
        out.append("capacity must be > 0")
    if not m.bandwidth > 0:
        out.append("bandwidth must be > 0")
    if not m.access_latency_p50 >= 0:
        out.append("access_latency_p50 must be >= 0")
    if not m.access_latency_tail >= m.access_latency_p50:
        out.append("access_latency_tail must be >= access_latency_p50")
    if m.active_power_per_bw < 0 or m.idle_power_per_byte < 0:
        out.append("power coefficients must be >= 0")
    if m.remote_access_penalty < 0:
        out.append("remote_access_penalty must be >= 0")
    return out


@dataclass(frozen=True)
class CarbonIntensitySeries:
    """Step function of grid carbon intensity (g/kWh); each sample holds until the next."""

    samples: tuple[tuple[int, float], ...]

    def __post_init__(self):
        samples = tuple((int(t), float(v)) for t, v in self.samples)
        object.__setattr__(self, "samples", samples)
        problems = series_problems(samples)
        if problems:
            raise DomainError("; ".join(problems))

    @classmethod
    def constant(cls, intensity: float) -> "CarbonIntensitySeries":
        return cls(((0, intensity),))

    @property
    def times(self) -> list[int]:
        return [t for t, _ in self.samples]

    def change_points(self, start: int, end: int) -> list[int]:
        """Sample timestamps strictly inside (start, end)."""
        return [t for t, _ in self.samples if start < t < end]


def series_problems(samples: Sequence[tuple[int, float]]) -> list[str]:
    out = []
    if not samples:
        out.append("carbon intensity series is empty")
    for i, (t, v) in enumerate(samples):
        if v < 0:
            out.append(f"sample {i}: intensity must be >= 0")
        if i and t <= samples[i - 1][0]:
            out.append(f"sample {i}: timestamps must be strictly increasing")
    return out


def power_draw(device: ComputeDevice, utilization: float) -> float:
    """Watts drawn at `utilization`; linear between idle and peak."""
    if not 0.0 <= utilization <= 1.0:
        raise DomainError(f"utilization {utilization} outside [0, 1]")
    return device.idle_power + device.dynamic_power * utilization


def energy_over(device: ComputeDevice, segments: Iterable[tuple[float, float]]) -> float:
    """Joules over a sequence of (duration_us, utilization) segments."""
    total = []
    for duration, u in segments:
        if duration < 0:
            raise DomainError(f"negative segment duration {duration}")
        total.append(power_draw(device, u) * duration / US_PER_S)
    return math.fsum(total)


def intensity_at(series: CarbonIntensitySeries, t: float) -> float:
    times = series.times
    if t < times[0]:
        raise DomainError(f"time {t} precedes first intensity sample at {times[0]}")
    return series.samples[bisect.bisect_right(times, t) - 1][1]


def embodied_carbon(device: ComputeDevice, duration_us: float) -> float:
    if duration_us < 0:
        raise DomainError(f"negative duration {duration_us}")
    return device.embodied_rate * duration_us / US_PER_S


def operational_carbon_rate(device: ComputeDevice, utilization: float, intensity: float) -> float:
    """Grams CO2e per second drawn at a steady operating point."""
    return power_draw(device, utilization) * intensity / J_PER_KWH


def calibrate_embodied_rate(
    device: ComputeDevice,
    share: float = EMBODIED_SHARE,
    utilization: float = REFERENCE_UTILIZATION,
    intensity: float = REFERENCE_INTENSITY,
) -> float:
    """Embodied g/s giving `share` of lifecycle carbon at the reference operating point."""
    if not 0.0 <= share < 1.0:
        raise DomainError("embodied share must be in [0, 1)")
    return share / (1.0 - share) * operational_carbon_rate(device, utilization, intensity)


def embodied_share(
    device: ComputeDevice,
    utilization: float = REFERENCE_UTILIZATION,
    intensity: float = REFERENCE_INTENSITY,
) -> float:
    op = operational_carbon_rate(device, utilization, intensity)
    total = op + device.embodied_rate
    return device.embodied_rate / total if total > 0 else 0.0


def accelerator_like(
    cpu: ComputeDevice,
    efficiency: float,
    speedup: float,
    *,
    id: str = "FPGA",
    kind: DeviceKind = DeviceKind.FPGA,
    startup_latency: int = 0,
    startup_energy: float = 0.0,
) -> ComputeDevice:
    """Accelerator with the CPU's capacity whose energy per unit of work is 1/efficiency of the CPU's.

    The accelerator finishes `speedup` times faster, so its peak power is
    cpu.peak_power * speedup / efficiency.
    """
    if efficiency <= 0 or speedup <= 0:
        raise DomainError("efficiency and speedup must be > 0")
    return ComputeDevice(
        id=id,
        kind=kind,
        peak_power=cpu.peak_power * speedup / efficiency,
        capacity=cpu.capacity,
        idle_fraction=cpu.idle_fraction,
        startup_latency=startup_latency,
        startup_energy=startup_energy,
    )
