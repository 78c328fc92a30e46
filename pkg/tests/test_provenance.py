import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from carbonsched.hardware import CarbonIntensitySeries, DomainError
from carbonsched.provenance import (
    FEATURES,
    OPERATOR,
    AttributionModel,
    CallGraphCycleError,
    InsufficientSamplesError,
    ProvenanceRecord,
    RankDeficientError,
    TelemetrySample,
    aggregate_provenance,
    attribute_interval,
    carbonize,
    estimate_energy,
    fit_model,
    read_telemetry_csv,
    synthetic_telemetry,
    write_telemetry_csv,
)

coef = st.floats(0.0, 10.0)
mag = st.floats(0.0, 1e6)


def sample(fid="f", **feats):
    return TelemetrySample(fid, "d", feats)


def test_estimate_examples():
    m = AttributionModel({"cpu_cycles": 1e-9}, baseline=0.25)
    assert estimate_energy(m, sample(cpu_cycles=0.0)) == 0.25
    assert estimate_energy(AttributionModel({"cpu_cycles": 1e-9}), sample(cpu_cycles=1e9)) == 1.0
    with pytest.raises(DomainError):
        estimate_energy(m, sample(network_bytes=1.0))


def test_negative_magnitude_rejected():
    with pytest.raises(DomainError):
        sample(cpu_cycles=-1.0)


@given(st.dictionaries(st.sampled_from(FEATURES), st.tuples(coef, mag), min_size=1), coef)
def test_estimate_is_dot_product(fc, base):
    m = AttributionModel({k: c for k, (c, _) in fc.items()}, base)
    s = sample(**{k: v for k, (_, v) in fc.items()})
    expected = base + sum(c * v for c, v in fc.values())
    assert math.isclose(estimate_energy(m, s), expected, rel_tol=1e-12, abs_tol=1e-12)


@given(st.dictionaries(st.sampled_from(FEATURES), st.tuples(coef, mag), min_size=1), st.sampled_from(FEATURES), mag)
def test_estimate_monotone_in_each_feature(fc, bump, extra):
    m = AttributionModel({**{k: c for k, (c, _) in fc.items()}, bump: fc.get(bump, (1.0, 0))[0]})
    feats = {k: v for k, (_, v) in fc.items()}
    more = dict(feats)
    more[bump] = feats.get(bump, 0.0) + extra
    assert estimate_energy(m, sample(**feats)) <= estimate_energy(m, sample(**more))


TRUE = {"cpu_cycles": 1e-9, "network_bytes": 2e-8}


def rel(a, b):
    return abs(a - b) / abs(b)


def test_fit_recovers_noiseless():
    m = fit_model(synthetic_telemetry(TRUE, 0.5, 200, seed=1))
    assert all(rel(m.coefficients[k], v) < 1e-6 for k, v in TRUE.items())
    assert rel(m.baseline, 0.5) < 1e-6


def test_fit_recovers_with_noise():
    m = fit_model(synthetic_telemetry(TRUE, 0.5, 1000, noise=0.01, seed=1))
    assert all(rel(m.coefficients[k], v) < 0.05 for k, v in TRUE.items())


def test_fit_rejects_collinear_columns():
    data = [(sample(f"s{i}", a=float(i), b=float(i)), 2.0 * i) for i in range(10)]
    with pytest.raises(RankDeficientError) as e:
        fit_model(data)
    assert set(e.value.columns) == {"a", "b"}


def test_fit_needs_enough_samples():
    with pytest.raises(InsufficientSamplesError):
        fit_model([(sample(a=1.0), 1.0)])


def test_fit_projects_negative_coefficients():
    # energy falls with `b`: the unconstrained fit would give b a negative slope
    data = [(sample(f"s{i}", a=float(i % 7), b=float((3 * i) % 11)), 1.0 + 0.5 * (i % 7) - 0.01 * ((3 * i) % 11)) for i in range(60)]
    m = fit_model(data)
    assert all(v >= 0 for v in m.coefficients.values())
    assert m.coefficients["b"] == 0.0


def test_fit_is_idempotent_on_own_predictions():
    data = synthetic_telemetry(TRUE, 0.5, 100, noise=0.02, seed=4)
    m = fit_model(data)
    again = fit_model([(s, estimate_energy(m, s)) for s, _ in data])
    for k in TRUE:
        assert math.isclose(again.coefficients[k], m.coefficients[k], rel_tol=1e-9)
    assert math.isclose(again.baseline, m.baseline, rel_tol=1e-9)


def test_telemetry_csv_roundtrip():
    data = synthetic_telemetry(TRUE, 0.5, 10, seed=2)
    buf = io.StringIO()
    write_telemetry_csv(data, buf)
    back = read_telemetry_csv(io.StringIO(buf.getvalue()))
    assert [(s.features, e) for s, e in back] == [(s.features, e) for s, e in data]


def test_telemetry_csv_duplicate_columns():
    with pytest.raises(RankDeficientError):
        read_telemetry_csv(io.StringIO("a,a,measured_j\n1,1,2\n"))


def test_attribution_examples():
    m = AttributionModel({"cpu_cycles": 1.0})
    assert attribute_interval(m, [sample("f", cpu_cycles=2.0)], 2.0) == {"f": (2.0, 0.0)}
    out = attribute_interval(m, [sample("f", cpu_cycles=1.0), sample("g", cpu_cycles=1.0)], 4.0)
    assert out == {"f": (1.0, 1.0), "g": (1.0, 1.0)}
    assert attribute_interval(m, [], 3.0) == {OPERATOR: (0.0, 3.0)}
    assert attribute_interval(m, [], 0.0) == {}


def test_all_idle_interval_split_equally():
    m = AttributionModel({"cpu_cycles": 1.0})
    out = attribute_interval(m, [sample("f", cpu_cycles=0.0), sample("g", cpu_cycles=0.0)], 3.0)
    assert out == {"f": (0.0, 1.5), "g": (0.0, 1.5)}


intervals = st.lists(st.tuples(st.sampled_from("abcde"), st.floats(0.0, 1e3)), max_size=10)


@given(intervals, st.floats(0.0, 1e4), st.sampled_from(["proportional", "equal", "operator"]), st.floats(0.0, 5.0))
def test_attribution_conserves(samples, measured, mode, baseline):
    m = AttributionModel({"cpu_cycles": 1e-3}, baseline)
    out = attribute_interval(m, [sample(f, cpu_cycles=v) for f, v in samples], measured, mode)
    total = math.fsum(d + i for d, i in out.values())
    assert abs(total - measured) <= 1e-9 * max(1.0, abs(measured))


def test_aggregation_chain():
    recs = {k: ProvenanceRecord(k, e) for k, e in (("a", 1.0), ("b", 2.0), ("c", 3.0))}
    out = aggregate_provenance(recs, {"a": None, "b": "a", "c": "b"})
    assert out["a"].descendant_energy == 5.0
    assert out["b"].descendant_energy == 3.0
    assert out["c"].descendant_energy == 0.0


def test_aggregation_cycle():
    recs = {k: ProvenanceRecord(k, 1.0) for k in "ab"}
    with pytest.raises(CallGraphCycleError):
        aggregate_provenance(recs, {"a": "b", "b": "a"})


@st.composite
def forests(draw):
    n = draw(st.integers(1, 25))
    ids = [f"n{i}" for i in range(n)]
    parents = {ids[0]: None}
    for i in range(1, n):
        parents[ids[i]] = draw(st.none() | st.sampled_from(ids[:i]))
    energy = {k: (draw(st.floats(0, 100)), draw(st.floats(0, 10))) for k in ids}
    return parents, energy


@given(forests(), st.floats(0.1, 10.0))
def test_aggregation_matches_path_sums(forest, lam):
    parents, energy = forest
    recs = {k: ProvenanceRecord(k, d, i) for k, (d, i) in energy.items()}
    out = aggregate_provenance(recs, parents)

    def ancestors(k):
        while parents[k] is not None:
            k = parents[k]
            yield k

    brute = {k: 0.0 for k in parents}
    for k, (d, i) in energy.items():
        for a in ancestors(k):
            brute[a] += d + i
    for k in parents:
        assert math.isclose(out[k].descendant_energy, brute[k], rel_tol=1e-9, abs_tol=1e-9)
    scaled = aggregate_provenance({k: ProvenanceRecord(k, d * lam, i * lam) for k, (d, i) in energy.items()}, parents)
    for k in parents:
        assert math.isclose(scaled[k].total_energy, lam * out[k].total_energy, rel_tol=1e-9, abs_tol=1e-9)


def test_carbonize_examples():
    s = CarbonIntensitySeries.constant(500.0)
    assert carbonize(3.6e6, s, 0) == 500.0
    assert carbonize(0.0, s, 0) == 0.0
    with pytest.raises(DomainError):
        carbonize(1.0, CarbonIntensitySeries(((10, 1.0),)), 0)


@given(st.floats(0, 1e9), st.floats(0, 2000), st.integers(0, 10**6))
def test_carbonize_unit_conversion(e, g, t):
    s = CarbonIntensitySeries(((0, g),))
    assert math.isclose(carbonize(e, s, t), e * g / 3.6e6, rel_tol=1e-12, abs_tol=1e-300)
