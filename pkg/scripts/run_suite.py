"""Run every registered experiment, write envelopes under --out, and print a timing table.

    python scripts/run_suite.py --out results --seed 0
"""
import argparse
import time
from pathlib import Path

from blochobs.harness.cache import EigenCache
from blochobs.harness.cli import atomic_write
from blochobs.harness.config import ExperimentConfig
from blochobs.harness.experiments import REGISTRY, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("names", nargs="*")
    args = ap.parse_args(argv)
    out = Path(args.out)
    cache = EigenCache()
    failed = 0
    print(f"{'criterion':>9}  {'experiment':<18} {'seconds':>8}  result")
    for name in args.names or REGISTRY:
        t0 = time.perf_counter()
        env, artifacts = run(ExperimentConfig(name, seed=args.seed, out=str(out)), cache)
        dt = time.perf_counter() - t0
        atomic_write(out / f"{name}.envelope.json", env.to_json())
        atomic_write(out / f"{name}.csv", env.rows_csv())
        for fname, text in artifacts.items():
            atomic_write(out / fname, text)
        bad = [c.name for c in env.checks if not c.passed]
        failed += bool(bad)
        print(f"{REGISTRY[name].criterion:>9}  {name:<18} {dt:8.1f}  {'PASS' if not bad else 'FAIL: ' + '; '.join(bad)}")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
