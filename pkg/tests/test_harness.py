import json
import warnings

import numpy as np
import pytest
from click.testing import CliRunner

from blochobs.fields import ModeSet
from blochobs.harness import cache as cache_mod
from blochobs.harness.cache import EigenCache
from blochobs.harness.cli import main
from blochobs.harness.config import ExperimentConfig, config_from_dict, load_config
from blochobs.harness.envelope import METRICS, ORACLES, ResultEnvelope, Row, compare
from blochobs.harness.experiments import REGISTRY, run
from blochobs.potentials import from_tag


def test_registry_metrics_have_oracle_tags():
    assert all(o in ORACLES for o, _ in METRICS.values())
    with pytest.raises(KeyError):
        Row("not_a_metric", "k", 1.0)
    with pytest.raises(ValueError):
        Row("c_obs", "k", 1.0, "vibes")


def test_every_criterion_has_an_experiment():
    assert {e.criterion for e in REGISTRY.values()} == set(range(1, 12))


def test_config_validation():
    with pytest.raises(ValueError):
        config_from_dict({"experiment": "gap-witness", "colour": "red"})
    with pytest.raises(ValueError):
        config_from_dict({"d": 2})
    for bad in ({"T": [-1.0]}, {"hs": [2.0]}, {"d": 3}, {"N": 0}, {"potentials": []}, {"seed": -1}):
        with pytest.raises(ValueError):
            ExperimentConfig("exact-spectrum", **bad).validate()


def test_theta_grid():
    cfg = ExperimentConfig("x", d=2, theta_grid=2)
    assert cfg.theta_list() == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)]
    assert ExperimentConfig("x", thetas=[[0.3]]).theta_list() == [(0.3,)]


def test_load_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('experiment = "gap-witness"\nseed = 7\n[params]\neps = [0.01]\n')
    cfg = load_config(p)
    assert cfg.seed == 7 and cfg.params == {"eps": [0.01]}
    assert cfg.digest() != ExperimentConfig("gap-witness").digest()


def test_unknown_experiment():
    with pytest.raises(KeyError):
        run(ExperimentConfig("nope"))


def test_deterministic_addresses(tmp_path):
    c = EigenCache(tmp_path)
    a, _ = run(ExperimentConfig("conservation", seed=3), c)
    b, _ = run(ExperimentConfig("conservation", seed=3), c)
    d, _ = run(ExperimentConfig("conservation", seed=4), c)
    assert a.body() == b.body() and a.content_address == b.content_address
    assert d.content_address != a.content_address
    assert a.passed()


def test_cache_transparent(tmp_path):
    cfg = ExperimentConfig("hum-roundtrip", samples=2)
    on, _ = run(cfg, EigenCache(tmp_path))
    off, _ = run(cfg, EigenCache(tmp_path, enabled=False))
    again, _ = run(cfg, EigenCache(tmp_path))
    assert on.content_address == off.content_address == again.content_address


def test_cache_hit_and_corruption(tmp_path):
    c = EigenCache(tmp_path)
    m = ModeSet(1, 4)
    V = from_tag("cosx", 1)
    E1 = c.get(m, (0.3,), V)
    E2 = c.get(m, (0.3,), V)
    assert (c.hits, c.misses) == (1, 1)
    assert np.array_equal(E1.values, E2.values)
    p = c.path(cache_mod.cache_key(m, (0.3,), V))
    with np.load(p) as z:
        vals, vecs, dig = z["values"].copy(), z["vectors"], z["digest"]
    vals[0] += 1.0
    np.savez(p, values=vals, vectors=vecs, digest=dig)
    with pytest.warns(UserWarning, match="failed verification"):
        E3 = c.get(m, (0.3,), V)
    assert c.corrupt == 1 and np.array_equal(E3.values, E1.values)
    p.write_bytes(b"garbage")
    with pytest.warns(UserWarning):
        c.get(m, (0.3,), V)
    # keys separate theta and V
    assert cache_mod.cache_key(m, (0.3,), V) != cache_mod.cache_key(m, (0.31,), V)
    assert cache_mod.cache_key(m, (0.3,), V) != cache_mod.cache_key(m, (0.3,), None)


def test_envelope_roundtrip_and_tamper():
    env, _ = run(ExperimentConfig("gap-witness"))
    back = ResultEnvelope.from_json(env.to_json())
    assert back.content_address == env.content_address
    obj = json.loads(env.to_json())
    obj["rows"][0][2] = "12345"
    with pytest.raises(ValueError, match="content address"):
        ResultEnvelope.from_json(json.dumps(obj))
    obj = json.loads(env.to_json())
    obj["registry_version"] = 99
    with pytest.raises(ValueError):
        ResultEnvelope.from_json(json.dumps(obj))


def test_compare_self_and_perturbed():
    env, _ = run(ExperimentConfig("gramian-sweep"))
    assert all(d.ok for d in compare(env, env))
    rows = [Row(r.metric, r.key, r.value * (1.5 if r.metric == "c_obs" else 1.0), r.oracle) for r in env.rows]
    pert = ResultEnvelope(env.experiment, env.config_hash, env.config, rows, env.checks)
    bad = [d for d in compare(pert, env) if not d.ok]
    assert bad and {d.metric for d in bad} == {"c_obs"}
    missing = ResultEnvelope(env.experiment, env.config_hash, env.config, env.rows[1:], env.checks)
    assert any(d.drift == float("inf") for d in compare(missing, env))
    other, _ = run(ExperimentConfig("gap-witness"))
    with pytest.raises(ValueError):
        compare(other, env)


def test_rows_csv_columns():
    env, _ = run(ExperimentConfig("gap-witness"))
    lines = env.rows_csv().splitlines()
    assert lines[0] == "experiment,metric,key,value,oracle"
    assert all(l.startswith("gap-witness,") for l in lines[1:])
    assert env.get("witness_box", "eps=0.001") == 2048.0


# --- CLI ----------------------------------------------------------------------


def test_cli_run_and_compare(tmp_path):
    r = CliRunner()
    out1, out2 = tmp_path / "a", tmp_path / "b"
    res = r.invoke(main, ["--out", str(out1), "gap"])
    assert res.exit_code == 0, res.output
    assert "PASS" in res.output
    assert (out1 / "gap-witness.envelope.json").exists() and (out1 / "gap-witness.csv").exists()
    res = r.invoke(main, ["--out", str(out2), "--format", "json", "--no-cache", "gap"])
    assert res.exit_code == 0
    assert (out2 / "gap-witness.json").exists()
    a = (out1 / "gap-witness.envelope.json").read_bytes()
    assert a == (out2 / "gap-witness.envelope.json").read_bytes()
    res = r.invoke(main, ["compare", str(out1 / "gap-witness.envelope.json"), str(out2 / "gap-witness.envelope.json")])
    assert res.exit_code == 0 and "0 beyond tolerance" in res.output
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    res = r.invoke(main, ["compare", str(bad), str(out1 / "gap-witness.envelope.json")])
    assert res.exit_code == 2


def test_cli_config_seed_threads_and_artifacts(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('experiment = "conservation"\nsamples = 5\n')
    r = CliRunner()
    res = r.invoke(main, ["--config", str(cfg), "--seed", "11", "--threads", "1", "--out", str(tmp_path / "o"), "simulate"])
    assert res.exit_code == 0, res.output
    env = json.loads((tmp_path / "o" / "conservation.envelope.json").read_text())
    assert env["config"]["seed"] == 11 and env["config"]["samples"] == 5
    traj = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,norm_l2" and len(traj) == 22


def test_cli_sweep_unknown_and_failure_exit(tmp_path):
    r = CliRunner()
    res = r.invoke(main, ["--out", str(tmp_path), "sweep", "bogus"])
    assert res.exit_code != 0 and "unknown experiments" in res.output
    res = r.invoke(main, ["--out", str(tmp_path), "sweep", "gap-witness"])
    assert res.exit_code == 0, res.output


def test_cli_failing_check_exit_code(tmp_path, monkeypatch):
    from blochobs.harness import experiments as ex

    def always_fails(ctx):
        ctx.check("impossible", False, "by construction")

    monkeypatch.setitem(ex.REGISTRY, "always-fails", ex.Experiment("always-fails", always_fails, {}, 0))
    res = CliRunner().invoke(main, ["--out", str(tmp_path), "sweep", "always-fails"])
    assert res.exit_code == 1 and "FAIL  impossible" in res.output


def test_cli_rejects_bad_config(tmp_path):
    r = CliRunner()
    bad = tmp_path / "bad.toml"
    bad.write_text('experiment = "gap-witness"\nwhatever = 1\n')
    res = r.invoke(main, ["--config", str(bad), "gap"])
    assert res.exit_code != 0


def test_cli_config_grids_stay_with_their_experiment(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('experiment = "normal-form"\npotentials = ["cosy"]\nhs = [0.125]\nseed = 5\n')
    r = CliRunner()
    res = r.invoke(main, ["--config", str(cfg), "--out", str(tmp_path / "o"), "sweep"])
    assert res.exit_code == 0, res.output
    assert res.output.startswith("normal-form:") and "gap-witness" not in res.output
    res = r.invoke(main, ["--config", str(cfg), "--out", str(tmp_path / "o"), "gap"])
    assert res.exit_code == 0, res.output
    env = json.loads((tmp_path / "o" / "gap-witness.envelope.json").read_text())
    assert env["config"]["seed"] == 5 and env["config"]["potentials"] is None
