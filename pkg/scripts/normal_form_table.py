"""Normal-form operator norms over a finer h ladder (CSV columns h,norm_Q,norm_W,norm_R,defect).

    python scripts/normal_form_table.py --V cosy --h 0.25 0.125 0.0625 0.03125 0.015625
"""
import argparse
import sys

from blochobs.normal_form import normal_form, normal_form_csv
from blochobs.potentials import from_tag


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--V", default="cosy")
    ap.add_argument("--h", type=float, nargs="+", default=[0.25, 0.125, 0.0625, 0.03125])
    ap.add_argument("--theta", type=float, nargs=2, default=[0.3, 0.7])
    ap.add_argument("--eps", type=float, default=0.25)
    args = ap.parse_args(argv)
    reps = normal_form(from_tag(args.V, 2), args.h, tuple(args.theta), args.eps, tag=args.V)
    sys.stdout.write(normal_form_csv(reps))
    q = [r.norm_Q for r in reps]
    print(f"||Q|| max/min = {max(q) / min(q):.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
