"""Workload builders and small drivers shared by the scripts and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

import yaml

from .catalog import bundled, default_catalog, load_intensity_csv, step_series
from .engine import SimConfig, SimResult, run_policy_comparison
from .hardware import CarbonIntensitySeries, ComputeDevice, accelerator_like
from .interchange import HybridPlan, bursty_profile, split_hybrid
from .placement import PlacementProblem, solve_exact
from .workload import SLA, MicroFunction, TraceSpec, generate_trace, load_trace, trace_spec_from_dict


def canonical_trace() -> list[MicroFunction]:
    return load_trace(bundled("bursty_trace.jsonl"))


def canonical_spec() -> TraceSpec:
    return trace_spec_from_dict(yaml.safe_load(bundled("bursty_spec.yaml").read_text()))


def canonical_series() -> CarbonIntensitySeries:
    return load_intensity_csv(bundled("step_halving.csv"))


def slack_rich_spec(seed: int, duration: int = 100_000, rate: float = 400.0) -> TraceSpec:
    """The canonical app mix with deadlines far beyond the trace duration."""
    base = canonical_spec()
    apps = {a: replace(p, deadline_us=(4 * duration, 6 * duration), calls=None, call_probability=0.0) for a, p in base.apps.items()}
    return replace(base, duration=duration, base_rate=rate, burst_rate=rate, burst_duty=0.0, burst_period=0, apps=apps, seed=seed)


def carbon_shift_pair(seed: int, halving_at: int = 50_000, high: float = 500.0) -> tuple[SimResult, SimResult]:
    """(slack-aware mufunction-heuristic, no-defer) on one slack-rich workload, common horizon."""
    trace = generate_trace(slack_rich_spec(seed))
    series = step_series(high, halving_at)
    aware, baseline = run_policy_comparison(trace, default_catalog(), ["mufunction-heuristic", "no-defer"], SimConfig(), series)
    return aware, baseline


def hybrid_case(
    efficiency: float,
    seed: int = 0,
    base: float = 100.0,
    peak: float = 200.0,
    period_us: int = 200_000,
    burst_us: int = 50_000,
    duration_us: int = 1_000_000,
    jitter: float = 0.1,
    fpga_startup_us: int = 20_000,
) -> tuple[float, HybridPlan]:
    """Split a bursty profile between a CPU and an FPGA `efficiency` times more frugal per request."""
    cpu = ComputeDevice("cpu", "CPU", peak_power=200.0, capacity=1.0e9)
    fpga = accelerator_like(cpu, efficiency, speedup=2.0, startup_latency=fpga_startup_us, startup_energy=2.0)
    profile = bursty_profile(base, peak, period_us, burst_us, duration_us, jitter=jitter, seed=seed)
    return split_hybrid(profile, cpu, fpga, SLA(10_000), work=1.0e6, cpu_speedup=1.0, fpga_speedup=2.0)


def deadline_sweep(problem: PlacementProblem, scales: Sequence[float]) -> list[tuple[float, float]]:
    """(scale, optimal cost) for each deadline scale, via the exact solver."""
    out = []
    for s in scales:
        a = solve_exact(problem.with_deadline_scale(s))
        out.append((s, a.total_cost if a.complete else math.inf))
    return out
