"""Result envelopes: metric rows with oracle tags, content addressing, drift comparison."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

ORACLES = ("exact", "quadrature", "sampling", "sweep")
REGISTRY_VERSION = 1

# metric -> (oracle, relative drift tolerance used by compare)
METRICS: dict[str, tuple[str, float]] = {
    # spectrum / propagation
    "spectrum_error": ("exact", 1e-9),
    "dense_spectrum_error": ("exact", 1e-9),
    "norm_drift": ("exact", 1e-6),
    "group_law_defect": ("exact", 1e-6),
    # floquet
    "isometry_gap": ("exact", 1e-6),
    "direct_sum_gap": ("exact", 1e-6),
    "intertwine_gap": ("exact", 1e-6),
    "lift_gap": ("exact", 1e-6),
    "plane_constant": ("exact", 0.05),
    # gramians
    "c_obs": ("exact", 0.05),
    "c_obs_unit_error": ("exact", 1e-6),
    "quadrature_gap": ("quadrature", 1e-4),
    "t_monotone_excess": ("exact", 1e-6),
    "b_monotone_excess": ("exact", 1e-6),
    "c_obs_ratio": ("sweep", 0.1),
    "hum_replay_error": ("quadrature", 1e-3),
    "hum_cost_error": ("quadrature", 1e-3),
    "hum_cost": ("exact", 0.05),
    # clusters
    "enumeration_mismatch": ("exact", 0.0),
    "cluster_size": ("exact", 0.0),
    "zygmund_ratio": ("sampling", 0.05),
    "zygmund_growth": ("sampling", 0.05),
    "cluster_normalized": ("sampling", 0.1),
    "cluster_spread": ("sweep", 0.2),
    "sector_constant": ("exact", 0.0),
    "interaction_Q": ("exact", 0.0),
    "interaction_Q_spread": ("exact", 0.0),
    # resolvent / gaps
    "resolvent_ratio": ("sampling", 0.1),
    "resolvent_energy_residual": ("exact", 1e-3),
    "resolvent_converged": ("exact", 0.0),
    "resolvent_upper_bound": ("exact", 1e-9),
    "resolvent_max_over_median": ("sweep", 0.2),
    "resolvent_median_over_min": ("sweep", 0.2),
    "witness_k": ("exact", 0.0),
    "witness_l": ("exact", 0.0),
    "witness_box": ("exact", 0.0),
    "witness_identities": ("exact", 0.0),
    "witness_gap": ("exact", 1e-9),
    "witness_gap_error": ("exact", 1e-6),
    # semiclassical
    "quantization_error": ("exact", 1e-6),
    "hermitian_defect": ("exact", 1e-6),
    "commutator_residual": ("exact", 1e-3),
    "garding_min_eig": ("sweep", 0.05),
    "garding_exponent": ("sweep", 0.1),
    "cv_norm": ("sweep", 0.05),
    "cv_intercept_ratio": ("sweep", 0.1),
    "tail_H": ("exact", 1e-6),
    "tail_free": ("exact", 1e-6),
    "tail_ratio": ("exact", 0.05),
    "unit_pairing_error": ("exact", 1e-6),
    "mass_total_error": ("exact", 1e-6),
    "outside_fraction": ("exact", 0.05),
    "flow_deficit": ("exact", 0.05),
    "flow_halving_ratio": ("sweep", 0.05),
    # normal form
    "nf_defect": ("exact", 1e-3),
    "norm_Q": ("exact", 0.02),
    "norm_W": ("exact", 0.02),
    "norm_R": ("exact", 0.02),
    "norm_Q_spread": ("sweep", 0.05),
    "norm_R_spread": ("sweep", 0.05),
    "fiber_parseval": ("exact", 1e-3),
    "fiber_commutation": ("exact", 1e-3),
    "rotation_isometry": ("exact", 1e-6),
    "rotation_conjugation": ("exact", 1e-3),
}


def fmt(v: float) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def parse(s: str) -> float:
    return float(s)


@dataclass(frozen=True)
class Row:
    metric: str
    key: str
    value: float
    oracle: str = ""

    def __post_init__(self):
        if self.metric not in METRICS:
            raise KeyError(f"metric {self.metric!r} is not registered")
        if not self.oracle:
            object.__setattr__(self, "oracle", METRICS[self.metric][0])
        if self.oracle not in ORACLES:
            raise ValueError(f"bad oracle tag {self.oracle!r}")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ResultEnvelope:
    experiment: str
    config_hash: str
    config: dict
    rows: list
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def payload(self) -> dict:
        return {
            "experiment": self.experiment,
            "registry_version": REGISTRY_VERSION,
            "config_hash": self.config_hash,
            "config": self.config,
            "rows": [[r.metric, r.key, fmt(r.value), r.oracle] for r in self.rows],
            "checks": [[c.name, c.passed, c.detail] for c in self.checks],
            "notes": list(self.notes),
        }

    def body(self) -> bytes:
        return json.dumps(self.payload(), sort_keys=True, separators=(",", ":")).encode()

    @property
    def content_address(self) -> str:
        """git blob id of the canonical body (matches `git hash-object`)."""
        b = self.body()
        return hashlib.sha1(b"blob %d\0" % len(b) + b).hexdigest()

    def to_json(self) -> str:
        obj = self.payload()
        obj["content_address"] = self.content_address
        return json.dumps(obj, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultEnvelope":
        obj = json.loads(text)
        if obj.get("registry_version") != REGISTRY_VERSION:
            raise ValueError("metric registry version mismatch")
        rows = [Row(m, k, parse(v), o) for m, k, v, o in obj["rows"]]
        env = cls(obj["experiment"], obj["config_hash"], obj["config"], rows,
                  [Check(*c) for c in obj["checks"]], obj.get("notes", []))
        if "content_address" in obj and obj["content_address"] != env.content_address:
            raise ValueError("content address does not match the envelope body")
        return env

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["experiment", "metric", "key", "value", "oracle"])
        for r in self.rows:
            w.writerow([self.experiment, r.metric, r.key, fmt(r.value), r.oracle])
        return buf.getvalue()

    def rows_json(self) -> str:
        return json.dumps([{"metric": r.metric, "key": r.key, "value": fmt(r.value), "oracle": r.oracle} for r in self.rows],
                          indent=1) + "\n"

    def get(self, metric: str, key: str | None = None):
        vals = [r.value for r in self.rows if r.metric == metric and (key is None or r.key == key)]
        if key is not None:
            if len(vals) != 1:
                raise KeyError(f"{metric}[{key}]")
            return vals[0]
        return vals

    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class Drift:
    metric: str
    key: str
    base: float
    new: float
    drift: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.drift <= self.tol


def _rel(a: float, b: float) -> float:
    if a == b or (math.isnan(a) and math.isnan(b)):
        return 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        return math.inf
    return abs(a - b) / max(abs(b), 1e-300)


def compare(env: ResultEnvelope, base: ResultEnvelope, tolerances: dict | None = None) -> list[Drift]:
    """Per-metric relative drift of env against base; missing or extra rows count as infinite drift."""
    if env.experiment != base.experiment:
        raise ValueError("envelopes come from different experiments")
    tol = {k: v[1] for k, v in METRICS.items()}
    tol.update(tolerances or {})
    a = {(r.metric, r.key): r.value for r in env.rows}
    b = {(r.metric, r.key): r.value for r in base.rows}
    out = []
    for k in sorted(set(a) | set(b)):
        if k not in a or k not in b:
            out.append(Drift(k[0], k[1], b.get(k, math.nan), a.get(k, math.nan), math.inf, tol.get(k[0], 0.0)))
            continue
        # absolute floor for quantities that should be ~0 (errors, residuals)
        d = _rel(a[k], b[k])
        if max(abs(a[k]), abs(b[k])) < 1e-9:
            d = 0.0
        out.append(Drift(k[0], k[1], b[k], a[k], d, tol[k[0]]))
    return out
