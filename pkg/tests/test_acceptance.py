"""Acceptance suite: one test per criterion, each at its stated tolerance and runtime budget.

Every experiment runs once per session (shared fixture); each test then asserts
directly on the recorded metric rows, not only on the experiment's own checks.
A PASS/FAIL line per criterion is printed in the pytest terminal summary, or on
stdout when this file is run as a script.
"""
import math
import time
from collections import defaultdict

import numpy as np
import pytest

from blochobs.harness.cache import EigenCache
from blochobs.harness.config import ExperimentConfig
from blochobs.harness.experiments import REGISTRY, run

# criterion -> (experiments, runtime budget in seconds)
CRITERIA = {
    1: (["exact-spectrum"], 1.0),
    2: (["conservation"], 5.0),
    3: (["floquet-lift"], 30.0),
    4: (["gramian-sweep"], 60.0),
    5: (["hum-roundtrip"], 60.0),
    6: (["theta-uniformity"], 600.0),
    7: (["zygmund", "sectors"], 300.0),
    8: (["resolvent-sweep"], 600.0),
    9: (["gap-witness"], 10.0),
    10: (["weyl", "wigner"], 600.0),
    11: (["normal-form"], 300.0),
}

RESULTS: dict[int, tuple[bool, str]] = {}


class Run:
    def __init__(self, env, seconds):
        self.env, self.seconds = env, seconds
        self.by_metric = defaultdict(dict)
        for r in env.rows:
            self.by_metric[r.metric][r.key] = r.value

    def values(self, metric):
        vals = self.by_metric[metric]
        assert vals, f"no rows for {metric}"
        return np.array(list(vals.values()))

    def worst(self, metric):
        return float(np.max(self.values(metric)))


def _run_all(seed=0, cache=None):
    out = {}
    for name in REGISTRY:
        t0 = time.perf_counter()
        env, _ = run(ExperimentConfig(name, seed=seed), cache)
        out[name] = Run(env, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return _run_all(cache=EigenCache(tmp_path_factory.mktemp("accept-cache")))


def _record(n, failures, runs, detail=None):
    exps, budget = CRITERIA.get(n, ([], math.inf))
    secs = sum(runs[e].seconds for e in exps) if runs else 0.0
    if secs >= budget:
        failures.append(f"runtime {secs:.1f}s over budget {budget:g}s")
    ok = not failures
    RESULTS[n] = (ok, "; ".join(failures) if failures else detail or f"{secs:.1f}s (budget {budget:g}s)")
    assert ok, f"criterion {n}: " + "; ".join(failures)


def _expect(failures, cond, msg):
    if not cond:
        failures.append(msg)


def test_criterion_01_exact_spectrum(runs):
    r, f = runs["exact-spectrum"], []
    _expect(f, len(r.values("spectrum_error")) == 50, "expected 25 theta samples for each of d=1,2")
    _expect(f, r.worst("spectrum_error") < 1e-12, f"eigenvalue error {r.worst('spectrum_error'):.3g}")
    _expect(f, r.worst("dense_spectrum_error") < 1e-12, "dense eigvalsh disagrees")
    _record(1, f, runs)


def test_criterion_02_conservation_group_law(runs):
    r, f = runs["conservation"], []
    _expect(f, len(r.values("norm_drift")) == 50, "expected 50 samples")
    _expect(f, r.worst("norm_drift") < 1e-10, f"norm drift {r.worst('norm_drift'):.3g}")
    _expect(f, r.worst("group_law_defect") < 1e-9, f"group law {r.worst('group_law_defect'):.3g}")
    _record(2, f, runs)


def test_criterion_03_floquet(runs):
    r, f = runs["floquet-lift"], []
    for m in ("isometry_gap", "direct_sum_gap", "intertwine_gap", "lift_gap"):
        _expect(f, r.worst(m) < 1e-8, f"{m} {r.worst(m):.3g}")
    keys = r.by_metric["lift_gap"]
    for d in (1, 2):
        for K in (2, 3):
            n = sum(k.startswith(f"d={d};K={K};") for k in keys)
            _expect(f, n == 20, f"d={d} K={K}: {n} samples, expected 20")
    cfg = r.env.config
    _expect(f, max(cfg["params"]["N1"], cfg["params"]["N2"]) <= 4, "N above 4")
    _record(3, f, runs)


def test_criterion_04_gramian(runs):
    r, f = runs["gramian-sweep"], []
    _expect(f, r.worst("c_obs_unit_error") < 1e-10, "b=1 does not give 1/T")
    _expect(f, r.worst("quadrature_gap") < 1e-7, f"quadrature gap {r.worst('quadrature_gap'):.3g}")
    _expect(f, r.worst("t_monotone_excess") <= 0, "C_obs increases with T")
    _expect(f, r.worst("b_monotone_excess") <= 0, "C_obs increases with b")
    _expect(f, len(r.env.config["T"]) >= 4, "T grid smaller than 4")
    _record(4, f, runs)


def test_criterion_05_hum(runs):
    r, f = runs["hum-roundtrip"], []
    _expect(f, len(r.values("hum_replay_error")) == 10, "expected 10 targets")
    _expect(f, r.worst("hum_replay_error") < 1e-6, f"replay {r.worst('hum_replay_error'):.3g}")
    _expect(f, r.worst("hum_cost_error") < 1e-8, f"cost {r.worst('hum_cost_error'):.3g}")
    _record(5, f, runs)


def test_criterion_06_theta_uniformity(runs):
    r, f = runs["theta-uniformity"], []
    c = r.values("c_obs")
    _expect(f, c.size == 72, f"{c.size} Gramians, expected 2 potentials x 36 thetas")
    _expect(f, bool(np.all(np.isfinite(c))), "non-finite C_obs")
    _expect(f, c.max() / c.min() < 10, f"max/min {c.max() / c.min():.3g}")
    _record(6, f, runs)


def test_criterion_07_clusters(runs):
    z, s, f = runs["zygmund"], runs["sectors"], []
    _expect(f, len(z.values("enumeration_mismatch")) == 20, "expected 20 (theta, lambda) pairs")
    _expect(f, z.worst("enumeration_mismatch") == 0, "enumeration mismatch")
    ratios = z.by_metric["zygmund_ratio"]
    _expect(f, max(ratios.values()) <= 2 * ratios["lam=25"], "Zygmund ratio grows past 2x baseline")
    _expect(f, s.worst("sector_constant") < 20, f"sector constant {s.worst('sector_constant'):.3g}")
    q = s.values("interaction_Q")
    _expect(f, q.size == 3 and bool(np.all(np.isfinite(q))), "Q not finite on 3 thetas")
    _expect(f, q.max() - q.min() <= 2, f"Q spread {q.max() - q.min():g} exceeds +-1")
    _record(7, f, runs)


def test_criterion_08_resolvent(runs):
    r, f = runs["resolvent-sweep"], []
    est = r.values("resolvent_ratio")
    med = float(np.median(est))
    _expect(f, est.size == 54, "expected 3 tau x 9 theta x 2 V")
    _expect(f, est.max() <= 4 * med and est.min() >= med / 4, "estimate outside 4x of median")
    _expect(f, r.worst("resolvent_energy_residual") < 1e-8, "energy identity residual")
    _record(8, f, runs)


def test_criterion_09_gap_witness(runs):
    r, f = runs["gap-witness"], []
    _expect(f, len(r.values("witness_identities")) == 2, "expected two eps values")
    _expect(f, float(np.min(r.values("witness_identities"))) == 1.0, "integer identities fail")
    _expect(f, r.worst("witness_gap_error") < 1e-12, "gap formula error")
    for key, eps in (("eps=0.01", 1e-2), ("eps=0.001", 1e-3)):
        _expect(f, 0 < r.by_metric["witness_gap"][key] < eps, f"gap not below {eps}")
    _record(9, f, runs)


def test_criterion_10_semiclassical(runs):
    w, g, f = runs["weyl"], runs["wigner"], []
    _expect(f, w.worst("quantization_error") < 1e-12, "quantization special cases")
    _expect(f, w.worst("commutator_residual") < 1e-10, "commutator identity")
    ex = w.values("garding_exponent")
    _expect(f, bool(np.all((ex >= 0.8) & (ex <= 1.2))),
            "Garding exponent outside [0.8,1.2]: " + ", ".join(f"{x:.2f}" for x in ex))
    tails = w.by_metric["tail_ratio"]
    big = [v for k, v in tails.items() if int(k.split("=")[1]) >= 4]
    _expect(f, big and max(big) <= 2 and min(big) >= 0.5, "h-oscillation tails not within 2x")
    _expect(f, g.by_metric["outside_fraction"]["h=0.0625;rho=0.125"] < 0.05, "outside-annulus mass")
    halv = g.values("flow_halving_ratio")
    _expect(f, bool(np.all(np.abs(halv - 2) < 0.1)), f"flow deficit halving ratios {halv}")
    _record(10, f, runs)


def test_criterion_11_normal_form(runs):
    r, f = runs["normal-form"], []
    _expect(f, len(r.values("nf_defect")) == 6, "expected 2 V x 3 h")
    _expect(f, r.worst("nf_defect") < 1e-9, f"defect {r.worst('nf_defect'):.3g}")
    _expect(f, r.worst("norm_Q_spread") <= 1.10, f"||Q|| spread {r.worst('norm_Q_spread'):.3f}")
    _expect(f, r.worst("fiber_parseval") < 1e-12, "fiber Parseval")
    _expect(f, r.worst("fiber_commutation") < 1e-9, "fiber commutation")
    _record(11, f, runs)


def test_criterion_12_determinism(runs):
    # rerun without the cache so the comparison also covers cache transparency
    again = _run_all(cache=EigenCache(enabled=False))
    f = [n for n in REGISTRY if again[n].env.to_json() != runs[n].env.to_json()]
    msgs = [f"envelopes differ: {f}"] if f else []
    _record(12, msgs, None, f"{len(REGISTRY)} envelopes byte-identical")


def summary_lines():
    lines = []
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        lines.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return lines


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
