"""Command line entry point: `blochobs [global flags] <command>`."""
from __future__ import annotations

import os
import sys
import tempfile
from pathlib import Path

import click

from .cache import EigenCache
from .config import ExperimentConfig, load_config
from .envelope import ResultEnvelope, compare as compare_envelopes
from .experiments import REGISTRY, run

COMMANDS = {
    "simulate": "conservation",
    "gramian": "gramian-sweep",
    "hum": "hum-roundtrip",
    "floquet": "floquet-lift",
    "zygmund": "zygmund",
    "sectors": "sectors",
    "resolvent": "resolvent-sweep",
    "gap": "gap-witness",
    "weyl": "weyl",
    "wigner": "wigner",
    "normalform": "normal-form",
}


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_config(obj, experiment: str) -> ExperimentConfig:
    path, seed = obj["config"], obj["seed"]
    if path:
        cfg = load_config(path)
        if cfg.experiment != experiment:
            # grids written for one experiment are meaningless for another
            cfg = ExperimentConfig(experiment, seed=cfg.seed, out=cfg.out)
    else:
        cfg = ExperimentConfig(experiment)
    upd = {}
    if seed is not None:
        upd["seed"] = seed
    if obj["out"]:
        upd["out"] = obj["out"]
    return ExperimentConfig(**{**cfg.__dict__, **upd})


def _execute(obj, experiment: str) -> bool:
    cfg = _build_config(obj, experiment)
    env, artifacts = run(cfg, obj["cache"])
    out = Path(cfg.out)
    atomic_write(out / f"{experiment}.envelope.json", env.to_json())
    if obj["format"] == "csv":
        atomic_write(out / f"{experiment}.csv", env.rows_csv())
    else:
        atomic_write(out / f"{experiment}.json", env.rows_json())
    for name, text in sorted(artifacts.items()):
        atomic_write(out / name, text)
    click.echo(f"{experiment}: {len(env.rows)} rows, address {env.content_address}")
    for c in env.checks:
        click.echo(f"  {'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}".rstrip())
    return env.passed()


@click.group()
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), default=None, help="TOML config file.")
@click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output directory (default: results).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="RNG seed (u64).")
@click.option("--threads", type=click.IntRange(1), default=None, help="BLAS thread count.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", help="Row output format.")
@click.option("--no-cache", is_flag=True, help="Do not read or write the eigensystem cache.")
@click.pass_context
def main(ctx, config, out, seed, threads, fmt, no_cache):
    """Bloch-torus observability and semiclassical verification experiments."""
    if threads:
        from threadpoolctl import threadpool_limits

        ctx.with_resource(threadpool_limits(limits=threads))
    ctx.obj = {"config": config, "out": out, "seed": seed, "format": fmt, "cache": EigenCache(enabled=not no_cache)}


def _make(cmd: str, experiment: str):
    @main.command(name=cmd, help=f"Run the {experiment!r} experiment.")
    @click.pass_obj
    def _cmd(obj):
        sys.exit(0 if _execute(obj, experiment) else 1)

    return _cmd


for _c, _e in COMMANDS.items():
    _make(_c, _e)


@main.command()
@click.argument("names", nargs=-1)
@click.pass_obj
def sweep(obj, names):
    """Run several named experiments (default: the --config experiment, else all registered)."""
    if not names:
        names = (load_config(obj["config"]).experiment,) if obj["config"] else tuple(REGISTRY)
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise click.UsageError(f"unknown experiments {unknown}; known: {sorted(REGISTRY)}")
    ok = True
    for n in names:
        ok &= _execute(obj, n)
    sys.exit(0 if ok else 1)


@main.command(name="compare")
@click.argument("envelope", type=click.Path(exists=True, dir_okay=False))
@click.argument("baseline", type=click.Path(exists=True, dir_okay=False))
@click.option("--show-all", is_flag=True)
def compare_cmd(envelope, baseline, show_all):
    """Per-metric drift of ENVELOPE against BASELINE; exit 1 when any drift exceeds its tolerance."""
    try:
        a = ResultEnvelope.from_json(Path(envelope).read_text())
        b = ResultEnvelope.from_json(Path(baseline).read_text())
        drifts = compare_envelopes(a, b)
    except (ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    bad = [d for d in drifts if not d.ok]
    for d in drifts if show_all else bad:
        click.echo(f"{'DRIFT' if not d.ok else 'ok   '}  {d.metric}[{d.key}]  {d.base!r} -> {d.new!r}  rel {d.drift:.3g} (tol {d.tol:g})")
    click.echo(f"{len(drifts)} metrics compared, {len(bad)} beyond tolerance")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
