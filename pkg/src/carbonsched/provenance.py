"""Energy provenance: linear attribution over telemetry, interval books, RPC roll-up, carbon."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Mapping, Optional, Sequence

import numpy as np

from .hardware import J_PER_KWH, CarbonIntensitySeries, DomainError, intensity_at
from .workload import CallGraphCycleError, find_cycle, substream

FEATURES = ("cpu_cycles", "accelerator_cycles", "network_bytes", "storage_bytes_moved", "byte_seconds_resident")
OPERATOR = "__operator__"
IDLE_MODES = ("proportional", "equal", "operator")
INTERCEPT = "(baseline)"


class InsufficientSamplesError(ValueError):
    pass


class RankDeficientError(ValueError):
    def __init__(self, columns: Sequence[str]):
        super().__init__("collinear telemetry columns: " + ", ".join(columns))
        self.columns = list(columns)


@dataclass(frozen=True)
class TelemetrySample:
    function_id: str
    device_id: str
    features: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "features", dict(self.features))
        bad = [k for k, v in self.features.items() if not v >= 0]
        if bad:
            raise DomainError(f"negative telemetry magnitude for {bad}")


@dataclass(frozen=True)
class AttributionModel:
    coefficients: Mapping[str, float]
    baseline: float = 0.0
    stats: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", dict(self.coefficients))
        object.__setattr__(self, "stats", dict(self.stats))

    def to_dict(self) -> dict:
        return {
            "coefficients": {k: self.coefficients[k] for k in sorted(self.coefficients)},
            "baseline": self.baseline,
            "fit": {k: self.stats[k] for k in sorted(self.stats)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributionModel":
        return cls({k: float(v) for k, v in d["coefficients"].items()}, float(d.get("baseline", 0.0)), d.get("fit", {}))


@dataclass(frozen=True)
class ProvenanceRecord:
    function_id: str
    direct_energy: float
    idle_share: float = 0.0
    descendant_energy: float = 0.0
    carbon: float = 0.0
    app_id: str = ""

    @property
    def own_energy(self) -> float:
        return self.direct_energy + self.idle_share

    @property
    def total_energy(self) -> float:
        return self.direct_energy + self.idle_share + self.descendant_energy


def estimate_energy(model: AttributionModel, sample: TelemetrySample) -> float:
    terms = [model.baseline]
    for name, value in sample.features.items():
        if name not in model.coefficients:
            raise DomainError(f"feature {name!r} unknown to the attribution model")
        terms.append(model.coefficients[name] * value)
    return math.fsum(terms)


def _design(samples: Sequence[tuple[TelemetrySample, float]], features: Sequence[str]):
    X = np.array([[s.features.get(f, 0.0) for f in features] for s, _ in samples], dtype=float)
    y = np.array([e for _, e in samples], dtype=float)
    return X, y


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    norms = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in range(X.shape[1]) if norms[j] == 0]
    if zero:
        raise RankDeficientError(zero)
    Xs = X / norms
    _, s, vt = np.linalg.svd(Xs, full_matrices=False)
    tol = s[0] * max(Xs.shape) * 1e-10
    null = vt[s <= tol]
    if len(null):
        involved = sorted({names[j] for v in null for j in range(len(v)) if abs(v[j]) > 1e-6})
        raise RankDeficientError(involved)


def _lstsq(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    beta, *_ = np.linalg.lstsq(X / norms, y, rcond=None)
    return beta / norms


def fit_model(samples: Sequence[tuple[TelemetrySample, float]], features: Optional[Sequence[str]] = None) -> AttributionModel:
    """Least-squares fit of per-feature joules plus a baseline.

    Negative coefficients are unphysical: they are clamped to zero and the
    remaining columns refit, until every coefficient is non-negative.
    """
    if features is None:
        features = sorted({k for s, _ in samples for k in s.features})
    features = list(features)
    if len(samples) < len(features) + 1:
        raise InsufficientSamplesError(f"need at least {len(features) + 1} samples for {len(features)} features, got {len(samples)}")
    X, y = _design(samples, features)
    names = [INTERCEPT] + features
    A = np.column_stack([np.ones(len(y)), X])
    _check_rank(A, names)

    active = list(range(A.shape[1]))
    beta = np.zeros(A.shape[1])
    while True:
        sol = _lstsq(A[:, active], y)
        negative = [active[i] for i, b in enumerate(sol) if b < 0]
        if not negative:
            beta[:] = 0.0
            beta[active] = sol
            break
        active = [j for j in active if j not in negative]
        if not active:
            beta[:] = 0.0
            break

    pred = A @ beta
    resid = y - pred
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    stats = {
        "n_samples": float(len(y)),
        "rmse_j": float(np.sqrt(np.mean(resid**2))),
        "max_abs_residual_j": float(np.max(np.abs(resid))),
        "r2": 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0,
    }
    coefs = {f: float(beta[j + 1]) for j, f in enumerate(features)}
    return AttributionModel(coefs, float(beta[0]), stats)


def attribute_interval(
    model: AttributionModel,
    samples: Sequence[TelemetrySample],
    measured_total: float,
    mode: str = "proportional",
) -> dict[str, tuple[float, float]]:
    """Close the books for one accounting interval.

    Returns function_id -> (direct, idle_share). Whatever the model does not
    explain (the residual) is spread per `mode`; an interval with energy but
    no work books it to OPERATOR. The returned totals sum to measured_total.
    """
    if mode not in IDLE_MODES:
        raise DomainError(f"idle attribution mode must be one of {IDLE_MODES}")
    direct: dict[str, float] = {}
    for s in samples:
        direct[s.function_id] = direct.get(s.function_id, 0.0) + estimate_energy(model, s)
    out: dict[str, tuple[float, float]] = {}
    if not direct:
        if measured_total != 0:
            out[OPERATOR] = (0.0, measured_total)
        return out
    ids = sorted(direct)
    residual = measured_total - math.fsum(direct.values())
    total_direct = math.fsum(direct.values())
    for fid in ids:
        if mode == "operator":
            share = 0.0
        elif mode == "equal" or total_direct == 0:
            share = residual / len(ids)
        else:
            share = residual * (direct[fid] / total_direct)
        out[fid] = (direct[fid], share)
    if mode == "operator" and residual != 0:
        out[OPERATOR] = (0.0, residual)
    return out


def aggregate_provenance(
    records: Mapping[str, ProvenanceRecord],
    call_graph: Mapping[str, Optional[str]],
) -> dict[str, ProvenanceRecord]:
    """Fill descendant_energy: everything spent on a function's behalf by its RPC callees.

    `call_graph` maps child id -> caller id (None for roots).
    """
    cycle = find_cycle(call_graph)
    if cycle:
        raise CallGraphCycleError(cycle)
    children: dict[str, list[str]] = {}
    for child in sorted(call_graph):
        parent = call_graph[child]
        if parent is not None:
            children.setdefault(parent, []).append(child)

    done: dict[str, float] = {}

    def own(fid: str) -> float:
        r = records.get(fid)
        return r.own_energy if r is not None else 0.0

    # iterative post-order so deep RPC chains do not hit the recursion limit
    for root in sorted(set(records) | set(call_graph)):
        if root in done:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if node in done:
                continue
            if expanded:
                done[node] = math.fsum(own(c) + done[c] for c in children.get(node, ()))
            else:
                stack.append((node, True))
                stack.extend((c, False) for c in children.get(node, ()) if c not in done)
    return {fid: replace(r, descendant_energy=done.get(fid, 0.0)) for fid, r in records.items()}


def carbonize(energy: float, series: CarbonIntensitySeries, t: float) -> float:
    return energy / J_PER_KWH * intensity_at(series, t)


def write_provenance_csv(records: Iterable[ProvenanceRecord], stream: IO[str], fmt=repr) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["function_id", "app_id", "direct_j", "idle_share_j", "descendant_j", "carbon_g"])
    for r in records:
        w.writerow([r.function_id, r.app_id, fmt(r.direct_energy), fmt(r.idle_share), fmt(r.descendant_energy), fmt(r.carbon)])


def synthetic_telemetry(
    coefficients: Mapping[str, float],
    baseline: float,
    n: int,
    noise: float = 0.0,
    seed: int = 0,
) -> list[tuple[TelemetrySample, float]]:
    """Lab-style measurements generated from known coefficients.

    Feature magnitudes are scaled so each term contributes O(1) joules;
    `noise` is the relative std-dev of multiplicative Gaussian meter error.
    """
    feat_rng = substream(seed, "telemetry")
    noise_rng = substream(seed, "noise")
    names = sorted(coefficients)
    out = []
    for i in range(n):
        feats = {}
        for f in names:
            c = coefficients[f]
            scale = 1.0 / c if c > 0 else 1e6
            feats[f] = float(feat_rng.uniform(0.0, scale))
        truth = math.fsum([baseline] + [coefficients[f] * feats[f] for f in names])
        measured = truth * (1.0 + noise * float(noise_rng.standard_normal())) if noise else truth
        out.append((TelemetrySample(f"s{i}", "lab", feats), measured))
    return out


def read_telemetry_csv(stream: IO[str]) -> list[tuple[TelemetrySample, float]]:
    """Parse telemetry CSV: feature columns plus measured_j (function_id/device_id optional).

    Duplicate header names raise RankDeficientError since they cannot be
    told apart by any fit.
    """
    rows = list(csv.reader(stream))
    if not rows:
        raise InsufficientSamplesError("telemetry file is empty")
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise RankDeficientError(dupes)
    if "measured_j" not in header:
        raise ValueError("telemetry CSV needs a measured_j column")
    meta = {"measured_j", "function_id", "device_id"}
    feats = [h for h in header if h not in meta]
    out = []
    for i, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"row {i}: expected {len(header)} columns, got {len(row)}")
        rec = dict(zip(header, row))
        try:
            sample = TelemetrySample(
                rec.get("function_id", f"row{i}"),
                rec.get("device_id", ""),
                {f: float(rec[f]) for f in feats},
            )
            out.append((sample, float(rec["measured_j"])))
        except ValueError as e:
            raise ValueError(f"row {i}: {e}") from None
    return out


def write_telemetry_csv(samples: Sequence[tuple[TelemetrySample, float]], stream: IO[str]) -> None:
    feats = sorted({k for s, _ in samples for k in s.features})
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["function_id", "device_id", *feats, "measured_j"])
    for s, e in samples:
        w.writerow([s.function_id, s.device_id, *(repr(s.features.get(f, 0.0)) for f in feats), repr(e)])
