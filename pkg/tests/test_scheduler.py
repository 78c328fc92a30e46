import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonsched.catalog import catalog_from_dict, default_catalog, step_series
from carbonsched.engine import SimConfig, run
from carbonsched.experiments import carbon_shift_pair, slack_rich_spec
from carbonsched.hardware import CarbonIntensitySeries
from carbonsched.placement import effective_duration
from carbonsched.scheduler import (
    POLICIES,
    BestDuration,
    ScheduleWindow,
    UnknownPolicyError,
    check_policy,
    greener_ahead,
    latest_feasible_boundary,
    partition,
)
from carbonsched.workload import SLA, MicroFunction, TraceSpec, generate_trace

W = 1000


def fn(fid, deadline, arrival=0, app="A", work=1e6, speedup=None):
    return MicroFunction(fid, app, arrival, work, speedup or {"CPU": 1.0}, SLA(deadline))


def fixed(d):
    return lambda f: d


def test_partition_boundaries():
    w = ScheduleWindow.at(0, W)
    # best duration 100: slack = deadline - 100
    fs = [fn("zero", 100), fn("below", 100 + W - 1), fn("equal", 100 + W), fn("late", 50)]
    p = partition(fs, w, fixed(100))
    assert [f.id for f in p.admit] == ["below", "late", "zero"]
    assert [f.id for f in p.defer] == ["equal"]
    assert p.infeasible == ["late"]
    assert w.end - w.start == W
    assert not (w.admitted & w.deferred)


@given(st.lists(st.tuples(st.integers(1, 10**6), st.integers(0, 10**5)), max_size=30), st.integers(0, 50), st.integers(1, 5000))
def test_deferral_never_strands_feasibility(items, start_index, window):
    w = ScheduleWindow.at(start_index, window)
    fs = [fn(f"f{i}", d) for i, (d, _) in enumerate(items)]
    best = {f"f{i}": b for i, (_, b) in enumerate(items)}
    p = partition(fs, w, lambda f: best[f.id])
    for f in p.defer:
        # still non-negative slack at the next boundary
        assert f.arrival + f.sla.deadline - (w.start + window) - best[f.id] >= 0
    for f in p.admit:
        assert f.arrival + f.sla.deadline - w.start - best[f.id] < window
    assert {f.id for f in p.admit} | {f.id for f in p.defer} == {f.id for f in fs}
    assert not (w.admitted & w.deferred)


def test_latest_feasible_boundary():
    f = fn("f", 10_500)
    assert latest_feasible_boundary(f, 0, 500, W) == 10_000
    assert latest_feasible_boundary(f, 0, 10_000, W) == 0


def test_greener_ahead():
    s = CarbonIntensitySeries(((0, 500.0), (5500, 250.0)))
    assert greener_ahead(s, 0, 6000, W)
    # the drop lands inside window 5; the first greener boundary is 6000
    assert not greener_ahead(s, 0, 5000, W)
    assert not greener_ahead(CarbonIntensitySeries.constant(400.0), 0, 10**6, W)
    assert not greener_ahead(s, 6000, 10**6, W)


def test_unknown_policy_lists_names():
    with pytest.raises(UnknownPolicyError) as e:
        check_policy("fastest")
    for name in POLICIES:
        assert name in str(e.value)


def test_empty_trace():
    r = run([], default_catalog(), "mufunction-heuristic")
    assert r.schedule == [] and r.metrics.sla_violations == 0


def small_trace(seed, n_rate=300.0, duration=30_000):
    base = slack_rich_spec(seed)
    apps = {a: p.__class__(**{**p.__dict__, "deadline_us": (2_000, 60_000)}) for a, p in base.apps.items()}
    spec = TraceSpec(duration, n_rate, apps, base.app_mix, seed=seed)
    return generate_trace(spec)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("deferral", ["carbon", "slack"])
def test_run_invariants(seed, deferral):
    trace = small_trace(seed)
    cat = default_catalog()
    series = step_series(500.0, 10_000)
    r = run(trace, cat, "mufunction-heuristic", SimConfig(deferral=deferral), series)
    best = BestDuration(cat)
    # every arrived function is placed exactly once
    assert sorted(x.function_id for x in r.schedule) == sorted(f.id for f in trace)
    fmap = {f.id: f for f in trace}
    for row in r.schedule:
        f = fmap[row.function_id]
        if row.end > row.deadline:
            assert row.flagged
        admitted_at = row.window * W
        # a boundary sorts before an arrival at the same instant
        first = (f.arrival // W + 1) * W
        if f.arrival + f.sla.deadline - first - best(f) >= 0:
            # feasible on arrival: never admitted past its latest feasible boundary
            assert f.arrival + f.sla.deadline - admitted_at - best(f) >= 0
        assert row.start >= admitted_at >= f.arrival


def offline_feasible(trace, catalog):
    """Every device/media assignment and every order on each device.

    Work can start at the first window boundary after the arrivals, which
    is when any windowed scheduler first sees them.
    """
    opts = []
    for f in trace:
        per = []
        for d in catalog.devices:
            if f.speedup_on(d) is None:
                continue
            for mc in itertools.product(*(catalog.object_locations[o] for o in f.objects())):
                mm = {o: next(m for m in catalog.media if m.id == mid) for o, mid in zip(f.objects(), mc)}
                per.append((d, effective_duration(f, d, mm, catalog.locality.get(d.id, frozenset()))))
        opts.append(per)
    for combo in itertools.product(*opts):
        by_dev = {}
        for f, (d, dur) in zip(trace, combo):
            by_dev.setdefault(d.id, (d, []))[1].append((f, dur))
        ok = True
        for d, jobs in by_dev.values():
            if not any(_sequence_ok(d, order) for order in itertools.permutations(jobs)):
                ok = False
                break
        if ok:
            return True
    return False


def _sequence_ok(d, order):
    t, warm = W, set()
    for f, dur in order:
        if (d.startup_latency or d.startup_energy) and f.app_id not in warm:
            warm.add(f.app_id)
            t += d.startup_latency
        t += dur
        if t > f.arrival + f.sla.deadline:
            return False
    return True


TINY = catalog_from_dict({
    "devices": [
        {"id": "C1", "kind": "CPU", "peak_power": 100.0, "capacity": 1e9},
        {"id": "G1", "kind": "GPU", "peak_power": 250.0, "capacity": 1e9, "startup_latency": 300, "startup_energy": 0.01},
    ],
    "media": [],
})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("AB"), st.integers(200_000, 2_000_000), st.integers(100, 3000), st.floats(1.0, 4.0)), min_size=1, max_size=5))
def test_tiny_instances_meet_offline_feasibility(specs):
    trace = [
        MicroFunction(f"f{i}", app, 0, work, {"CPU": 1.0, "GPU": gs}, SLA(dl))
        for i, (app, work, dl, gs) in enumerate(specs)
    ]
    r = run(trace, TINY, "mufunction-exact")
    if offline_feasible(trace, TINY):
        assert r.metrics.sla_violations == 0


def test_carbon_policy_waits_for_the_drop():
    aware, baseline = carbon_shift_pair(0)
    assert all(row.start >= 50_000 for row in aware.schedule)
    assert aware.metrics.total_carbon <= baseline.metrics.total_carbon
    assert aware.metrics.sla_violations == 0


def test_slack_rule_defers_even_without_greener_window():
    trace = small_trace(1)
    flat = CarbonIntensitySeries.constant(400.0)
    carbon = run(trace, default_catalog(), "mufunction-heuristic", SimConfig(deferral="carbon"), flat)
    slack = run(trace, default_catalog(), "mufunction-heuristic", SimConfig(deferral="slack"), flat)
    mean = lambda r: sum(x.start for x in r.schedule) / len(r.schedule)  # noqa: E731
    assert mean(carbon) < mean(slack)


@pytest.mark.parametrize("policy", [p for p in POLICIES])
def test_schedule_is_deterministic(policy):
    trace = small_trace(2)
    a = run(trace, default_catalog(), policy).files()
    b = run(trace, default_catalog(), policy).files()
    assert a == b
