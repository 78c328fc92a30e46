"""Acceptance suite: one test per criterion, each printing a PASS/FAIL verdict.

Run alone with `pytest tests/test_acceptance.py -s` or `python3 tests/test_acceptance.py`.
"""

import math
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

from conftest import VERDICTS
from oracles import enumerate_optimum, pareto_brute

from carbonsched.catalog import bundled, default_catalog, step_series
from carbonsched.engine import SimConfig, run, run_policy_comparison
from carbonsched.experiments import canonical_spec, canonical_trace, carbon_shift_pair, hybrid_case
from carbonsched.interchange import TradeoffPoint, dominates, pareto_frontier
from carbonsched.placement import lower_bound, pareto_sweep, random_problem, solve_exact, solve_heuristic, solve_round_robin
from carbonsched.provenance import fit_model, synthetic_telemetry
from carbonsched.scheduler import POLICIES
from carbonsched.workload import generate_trace, substream

SUITE = 1000


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


_suite_cache = {}


def suite():
    """The 1000 small placement instances shared by criteria 1 and 2."""
    if not _suite_cache:
        _suite_cache["problems"] = [random_problem(s, n_functions=1 + s % 8, max_combinations=100_000) for s in range(SUITE)]
    return _suite_cache["problems"]


def test_criterion_1_exact_matches_enumeration():
    mismatches, elapsed = [], 0.0
    for seed, p in enumerate(suite()):
        t0 = time.perf_counter()
        a = solve_exact(p)
        elapsed += time.perf_counter() - t0
        u, cost, key = enumerate_optimum(p)
        # bitwise: float equality on the cost double, not a tolerance
        if (a.unplaced, a.total_cost, a.key()) != (u, cost, key):
            mismatches.append(seed)
    ok = not mismatches and elapsed < 60.0
    verdict(1, ok, f"{SUITE - len(mismatches)}/{SUITE} bitwise equal, exact solver {elapsed:.2f} s (limit 60 s) mismatches={mismatches[:5]}")


def test_criterion_2_solver_ordering():
    bad, h_sum, r_sum, h_unp, r_unp, n = [], 0.0, 0.0, 0, 0, 0
    for seed, p in enumerate(suite()):
        e, h, r = solve_exact(p), solve_heuristic(p), solve_round_robin(p)
        lb = lower_bound(p)
        # the order is on (unplaced, cost): a solver placing fewer functions is worse however cheap
        if not (lb <= e.total_cost and e.rank() <= h.rank()):
            bad.append(seed)
        h_unp += h.unplaced
        r_unp += r.unplaced
        if h.complete and r.complete:
            h_sum += h.total_cost
            r_sum += r.total_cost
            n += 1
    h_mean, r_mean = h_sum / n, r_sum / n
    ok = not bad and h_unp <= r_unp and h_mean < r_mean
    verdict(
        2, ok,
        f"LB <= exact <= heuristic on {SUITE - len(bad)}/{SUITE}; mean cost over {n} fully placed instances "
        f"heuristic {h_mean:.6g} J vs round-robin {r_mean:.6g} J; unplaced {h_unp} vs {r_unp}",
    )


def test_criterion_3_energy_conservation():
    cat = default_catalog()
    worst = 0.0
    modes = ("proportional", "equal", "operator")
    for seed in range(100):
        trace = generate_trace(replace(canonical_spec(), duration=20_000, seed=seed))
        policy = POLICIES[seed % len(POLICIES)]
        cfg = SimConfig(idle_mode=modes[seed % 3], power_gating=seed % 4 == 0)
        r = run(trace, cat, policy, cfg, step_series(500.0, 5_000 + 100 * seed))
        attributed = math.fsum(p.direct_energy + p.idle_share for p in r.provenance.values())
        device_total = math.fsum(r.metrics.energy_by_meter.values())
        err = abs(attributed + r.metrics.operator_energy - device_total) / device_total
        err = max(err, abs(device_total - r.metrics.total_energy) / device_total)
        worst = max(worst, err)
    verdict(3, worst < 1e-9, f"100 simulations, worst relative closure error {worst:.3g} (limit 1e-9)")


def test_criterion_4_provenance_recovery():
    true = {"cpu_cycles": 1e-9, "accelerator_cycles": 3e-10, "storage_bytes_moved": 5e-10, "network_bytes": 2e-8}

    def worst(m):
        return max(abs(m.coefficients[k] - v) / v for k, v in true.items())

    clean = worst(fit_model(synthetic_telemetry(true, 0.5, 1000, seed=11)))
    noisy = worst(fit_model(synthetic_telemetry(true, 0.5, 1000, noise=0.01, seed=11)))
    ok = clean < 1e-6 and noisy < 0.05
    verdict(4, ok, f"noiseless worst rel error {clean:.3g} (limit 1e-6), 1% noise worst rel error {noisy:.3g} (limit 0.05)")


def test_criterion_5_deadline_monotonicity():
    scales = [1.0, 1.5, 2.0, 4.0]
    bad = []
    for seed in range(100):
        costs = [c for _, c in pareto_sweep(random_problem(10_000 + seed, n_functions=1 + seed % 8, max_combinations=100_000), scales)]
        if not all(a >= b for a, b in zip(costs, costs[1:])):
            bad.append(seed)
    verdict(5, not bad, f"optimal cost non-increasing over scales {scales} on {100 - len(bad)}/100 problems")


def test_criterion_6_pareto_correctness():
    bad, dominated = [], 0
    for seed in range(20):
        rng = substream(seed, "acceptance/cloud")
        if seed % 2:
            cloud = [TradeoffPoint(f"q{i:04d}", float(rng.integers(0, 40)), float(rng.integers(0, 40))) for i in range(1000)]
        else:
            cloud = [TradeoffPoint(f"q{i:04d}", float(rng.uniform(0, 100)), float(rng.exponential(50))) for i in range(1000)]
        front = pareto_frontier(cloud)
        if front != pareto_brute(cloud):
            bad.append(seed)
        dominated += sum(any(dominates(q, p) for q in cloud) for p in front)
    ok = not bad and dominated == 0
    verdict(6, ok, f"frontier equals O(n^2) brute force on {20 - len(bad)}/20 clouds of 1000 points; dominated points kept: {dominated}")


def test_criterion_7_carbon_shifting():
    le, lt = 0, 0
    for seed in range(20):
        aware, baseline = carbon_shift_pair(seed)
        a, b = aware.metrics.total_carbon, baseline.metrics.total_carbon
        le += a <= b
        lt += a < b
    ok = le == 20 and lt >= 15
    verdict(7, ok, f"aware <= no-defer on {le}/20 seeds, strictly lower on {lt}/20 (need 20 and 15)")


def test_criterion_8_hybrid_dominance():
    cases, failures = 0, []
    for f in (10, 20, 70):
        for seed in range(20):
            _, plan = hybrid_case(f, seed=seed)
            cases += 1
            if not (plan.energy <= plan.cpu_only_energy and plan.violations == 0 and plan.fpga_only_violations > 0):
                failures.append((f, seed))
    verdict(
        8, not failures,
        f"{cases - len(failures)}/{cases} profiles (f in 10, 20, 70; 20 seeds) with hybrid <= CPU-only, "
        f"no hybrid violations and FPGA-only violating; failures={failures[:5]}",
    )


def test_criterion_9_faas_comparison():
    faas, mu = run_policy_comparison(canonical_trace(), default_catalog(), ["faas-baseline", "mufunction-heuristic"])
    fm, mm = faas.metrics, mu.metrics
    ok = fm.sla_violations >= 1 and fm.total_energy > mm.total_energy
    verdict(
        9, ok,
        f"faas-baseline {fm.total_energy:.6g} J, {fm.sla_violations} violations vs "
        f"mufunction-heuristic {mm.total_energy:.6g} J, {mm.sla_violations} violations",
    )


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "carbonsched.cli", *args], capture_output=True, text=True)


def _files(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_criterion_10_determinism(tmp_path):
    trace = str(bundled("bursty_trace.jsonl"))
    runs = {
        "simulate": ["simulate", "--trace", trace, "--intensity", str(bundled("step_halving.csv"))],
        "simulate-gated": ["simulate", "--trace", trace, "--policy", "mufunction", "--solver", "heuristic", "--power-gating"],
        "sweep": ["sweep", "--trace", trace, "--axis", "deadline", "--values", "1,2,4", "--jobs", "2"],
        "sweep-policy": ["sweep", "--trace", trace, "--axis", "policy", "--values", ",".join(POLICIES)],
    }
    same, codes = 0, []
    for name, args in runs.items():
        outs = []
        for i in range(2):
            d = tmp_path / f"{name}-{i}"
            codes.append(_cli(*args, "--out", str(d)).returncode)
            outs.append(_files(d) if d.is_dir() else None)
        same += outs[0] is not None and outs[0] == outs[1]
    ok = same == len(runs) and set(codes) == {0}
    verdict(10, ok, f"{same}/{len(runs)} CLI invocations byte-identical on rerun; exit codes {sorted(set(codes))}")


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-q", "-s"]))
