import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonsched.catalog import catalog_from_dict, default_catalog, step_series
from carbonsched.engine import (
    Event,
    EventKind,
    EventQueue,
    SimConfig,
    Simulation,
    SimulationInvariantError,
    run,
    run_policy_comparison,
)
from carbonsched.experiments import canonical_spec
from carbonsched.hardware import US_PER_S, CarbonIntensitySeries
from carbonsched.scheduler import POLICIES
from carbonsched.workload import SLA, MicroFunction, generate_trace

ONE_CPU = catalog_from_dict({"devices": [{"id": "C1", "kind": "CPU", "peak_power": 100.0, "capacity": 1e9}], "media": []})
GATEABLE = catalog_from_dict({
    "devices": [{"id": "C1", "kind": "CPU", "peak_power": 100.0, "capacity": 1e9, "startup_latency": 300, "startup_energy": 0.01}],
    "media": [],
})
FLAT = CarbonIntensitySeries.constant(400.0)


def bursty(seed, duration=30_000):
    return generate_trace(replace(canonical_spec(), duration=duration, seed=seed))


def test_queue_orders_kinds_at_equal_time():
    q = EventQueue()
    kinds = [EventKind.START, EventKind.ARRIVAL, EventKind.CUSTOM, EventKind.WINDOW_BOUNDARY, EventKind.COMPLETION, EventKind.INTENSITY_CHANGE]
    for k in kinds:
        q.push(Event(5, k, "x"))
    q.push(Event(4, EventKind.START, "y"))
    out = [q.pop() for _ in range(len(q))]
    assert out[0].time == 4
    assert [e.kind for e in out[1:]] == sorted(kinds)


def test_queue_breaks_ties_by_key_then_insertion():
    q = EventQueue()
    q.push(Event(1, EventKind.ARRIVAL, "b", 1))
    q.push(Event(1, EventKind.ARRIVAL, "a", 2))
    q.push(Event(1, EventKind.ARRIVAL, "a", 3))
    assert [q.pop().payload for _ in range(3)] == [2, 3, 1]


def test_time_regression_dumps_state():
    sim = Simulation([], ONE_CPU, "mufunction-heuristic", SimConfig(), FLAT)
    sim._advance(10)
    with pytest.raises(SimulationInvariantError) as e:
        sim._advance(5)
    assert e.value.state["now"] == 10 and "C1" in e.value.state["devices"]
    assert "state:" in str(e.value)


def test_empty_trace_is_idle_energy():
    r = run([], ONE_CPU, "mufunction-heuristic", SimConfig(horizon_us=5000))
    assert r.metrics.horizon_us == 5000
    assert math.isclose(r.metrics.total_energy, 50.0 * 5000 / US_PER_S, rel_tol=1e-12)
    assert r.metrics.sla_violations == 0 and r.metrics.operator_energy == r.metrics.total_energy


def test_one_function_closed_form():
    # 1e6 work at 1e9/s is 1000 us; seen at the first boundary, done by 2000
    f = MicroFunction("f", "A", 0, 1e6, {"CPU": 1.0}, SLA(2500))
    r = run([f], ONE_CPU, "mufunction-heuristic")
    (row,) = r.schedule
    assert (row.start, row.end) == (1000, 2000)
    H = r.metrics.horizon_us
    assert H == 2000
    expected = 50.0 * H / US_PER_S + (100.0 - 50.0) * (row.end - row.start) / US_PER_S
    assert math.isclose(r.metrics.total_energy, expected, rel_tol=1e-12)
    assert math.isclose(r.metrics.utilization["C1"], 0.5)


def test_same_inputs_give_identical_exports():
    t = bursty(3)
    a = run(t, default_catalog(), "mufunction-heuristic").files()
    b = run(t, default_catalog(), "mufunction-heuristic").files()
    assert a == b


@pytest.mark.parametrize("seed", range(3))
def test_mufunction_beats_faas_on_bursty_trace(seed):
    faas, mu = run_policy_comparison(bursty(seed), default_catalog(), ["faas-baseline", "mufunction-heuristic"])
    assert mu.metrics.total_energy <= faas.metrics.total_energy
    assert mu.metrics.sla_violations <= faas.metrics.sla_violations
    assert faas.metrics.cold_start_time_total >= 125_000


def test_identical_policies_identical_rows():
    a, b = run_policy_comparison(bursty(1), default_catalog(), ["round-robin", "round-robin"])
    assert a.files() == b.files()


def test_comparison_needs_two_policies():
    with pytest.raises(ValueError):
        run_policy_comparison([], default_catalog(), ["no-defer"])


def test_exact_beats_round_robin_without_contention():
    # sparse arrivals and loose deadlines: no window ever contends
    fs = [
        MicroFunction(f"f{i}", "AB"[i % 2], 5000 * i, 1e6 * (1 + i % 3), {"CPU": 1.0, "GPU": 2.0, "FPGA": 1.5}, SLA(100_000))
        for i in range(8)
    ]
    rr, ex = run_policy_comparison(fs, default_catalog(), ["round-robin", "mufunction-exact"])
    assert rr.metrics.sla_violations == ex.metrics.sla_violations == 0
    assert ex.metrics.total_energy <= rr.metrics.total_energy


def test_all_gated_horizon_uses_no_power():
    r = run([], GATEABLE, "mufunction-heuristic", SimConfig(horizon_us=5000, power_gating=True))
    assert r.metrics.energy_by_meter["C1"] == 0.0
    assert [s.state for s in r.segments] == ["off"]


def test_wake_delays_completion_by_startup_latency():
    f = MicroFunction("f", "A", 3000, 1e6, {"CPU": 1.0}, SLA(100_000))
    on = run([f], GATEABLE, "mufunction-heuristic")
    off = run([f], GATEABLE, "mufunction-heuristic", SimConfig(power_gating=True))
    assert off.schedule[0].end - on.schedule[0].end == 300
    assert "wake" in [x.reason for x in off.lumps]


def test_gating_busy_device_panics():
    f = MicroFunction("f", "A", 0, 1e6, {"CPU": 1.0}, SLA(100_000))
    sim = Simulation([f], GATEABLE, "mufunction-heuristic", SimConfig(), FLAT)
    sim.state.available_from["C1"] = 10_000
    with pytest.raises(SimulationInvariantError):
        sim.power_gate("C1")


@pytest.mark.parametrize("seed", range(4))
def test_gating_saves_energy_without_new_violations(seed):
    t = bursty(seed, 20_000)
    plain, gated = (run(t, default_catalog(), "mufunction-heuristic", SimConfig(power_gating=g, horizon_us=40_000)) for g in (False, True))
    assert gated.metrics.total_energy <= plain.metrics.total_energy
    assert gated.metrics.sla_violations == plain.metrics.sla_violations


def recompute_by_meter(r, catalog):
    """Energy per meter rebuilt from the exported timelines."""
    H = r.metrics.horizon_us
    out = {}
    for s in r.segments:
        out.setdefault(s.meter, []).append(s.power * (s.end - s.start) / US_PER_S)
    for x in r.lumps:
        out.setdefault(x.meter, []).append(x.energy)
    for _, meter, _, e in r.media_accesses:
        out.setdefault(meter, []).append(e)
    for m in catalog.media:
        out.setdefault(m.id, []).append(m.idle_power_per_byte * catalog.resident_bytes()[m.id] * H / US_PER_S)
    return {k: math.fsum(v) for k, v in out.items()}


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("policy", ["mufunction-heuristic", "faas-baseline", "round-robin"])
def test_conservation_against_timelines(seed, policy):
    cat = default_catalog()
    r = run(bursty(seed, 20_000), cat, policy, SimConfig(power_gating=(seed % 2 == 1)), step_series(500.0, 7_000))
    got = recompute_by_meter(r, cat)
    for meter, e in r.metrics.energy_by_meter.items():
        assert abs(got.get(meter, 0.0) - e) <= 1e-9 * max(1.0, abs(e)), meter
    total = math.fsum(got.values())
    assert abs(total - r.metrics.total_energy) <= 1e-9 * r.metrics.total_energy
    # each device timeline tiles [0, H]
    for d in cat.devices:
        segs = sorted((s.start, s.end) for s in r.segments if s.meter == d.id)
        assert segs[0][0] == 0 and segs[-1][1] == r.metrics.horizon_us
        assert all(a[1] == b[0] for a, b in zip(segs, segs[1:]))


@pytest.mark.parametrize("idle_mode", ["proportional", "equal", "operator"])
def test_provenance_closes(idle_mode):
    r = run(bursty(5, 20_000), default_catalog(), "mufunction-heuristic", SimConfig(idle_mode=idle_mode))
    attributed = math.fsum(p.direct_energy + p.idle_share for p in r.provenance.values())
    closure = attributed + r.metrics.operator_energy
    assert abs(closure - r.metrics.total_energy) <= 1e-9 * r.metrics.total_energy


def test_carbon_is_energy_times_intensity_per_piece():
    r = run([], ONE_CPU, "mufunction-heuristic", SimConfig(horizon_us=4000), step_series(500.0, 2000))
    # 0.1 J at 500 g/kWh then 0.1 J at 250 g/kWh
    assert math.isclose(r.metrics.operational_carbon, (0.1 * 500 + 0.1 * 250) / 3.6e6, rel_tol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 30))
def test_longer_horizon_only_adds_idle(seed, extra_windows):
    t = bursty(seed, 10_000)
    short = run(t, default_catalog(), "mufunction-heuristic")
    H = short.metrics.horizon_us
    long = run(t, default_catalog(), "mufunction-heuristic", SimConfig(horizon_us=H + 1000 * extra_windows))
    assert long.metrics.horizon_us == H + 1000 * extra_windows
    assert long.metrics.total_energy >= short.metrics.total_energy
    assert [(x.function_id, x.device_id, x.start, x.end) for x in long.schedule] == [
        (x.function_id, x.device_id, x.start, x.end) for x in short.schedule
    ]


@pytest.mark.parametrize("policy", list(POLICIES))
def test_violations_bounded_by_function_count(policy):
    t = bursty(7, 20_000)
    m = run(t, default_catalog(), policy, SimConfig(deadline_scale=0.2)).metrics
    assert 0 <= m.sla_violations <= m.functions == len(t)
    assert 0.0 <= m.violation_rate <= 1.0


def test_soft_mode_runs_and_flags_late_work():
    t = bursty(2, 20_000)
    m = run(t, default_catalog(), "mufunction-heuristic", SimConfig(sla_mode="soft", deadline_scale=0.2)).metrics
    assert m.sla_violations <= m.functions


def test_bad_config_lists_every_problem():
    from carbonsched.hardware import DomainError

    with pytest.raises(DomainError) as e:
        SimConfig(window_us=0, sla_mode="medium")
    assert "window_us" in str(e.value) and "sla_mode" in str(e.value)


def test_tail_percentile_judged_per_app():
    # two invocations, one hopelessly late: 50% on time
    fs = [
        MicroFunction("ok", "A", 0, 1e6, {"CPU": 1.0}, SLA(10_000, 0.5)),
        MicroFunction("late", "A", 0, 1e6, {"CPU": 1.0}, SLA(10, 0.5)),
    ]
    a = run(fs, ONE_CPU, "mufunction-heuristic").metrics.apps["A"]
    assert a["violations"] == 1 and a["on_time_fraction"] == 0.5 and a["tail_sla_met"]
    strict = [replace(f, sla=SLA(f.sla.deadline, 0.9)) for f in fs]
    assert not run(strict, ONE_CPU, "mufunction-heuristic").metrics.apps["A"]["tail_sla_met"]


def test_gating_forgets_warm_apps():
    # first call warms app A, the device is gated while idle, the second call pays start-up again
    fs = [MicroFunction(f"f{i}", "A", t, 1e6, {"CPU": 1.0}, SLA(100_000)) for i, t in enumerate((0, 20_000))]
    kept = run(fs, GATEABLE, "mufunction-heuristic")
    gated = run(fs, GATEABLE, "mufunction-heuristic", SimConfig(power_gating=True))
    assert [x.reason for x in kept.lumps] == ["startup"]
    assert [x.reason for x in gated.lumps] == ["wake", "startup", "wake", "startup"]
