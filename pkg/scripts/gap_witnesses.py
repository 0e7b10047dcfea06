"""Gap-failure witnesses for a decreasing sequence of eps at a fixed irrational theta.

    python scripts/gap_witnesses.py --eps 1e-1 1e-2 1e-3
"""
import argparse
import csv
import sys

from blochobs.inequalities import gap_failure_witness


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--theta", type=float, nargs=2, default=[0.7071067811865476, 0.5773502691896258])
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3])
    ap.add_argument("--kmax", type=int, default=1 << 12)
    args = ap.parse_args(argv)
    w = csv.writer(sys.stdout)
    w.writerow(["eps", "k", "l", "box", "gap", "operator_gap_error", "identities"])
    for eps in args.eps:
        g = gap_failure_witness(tuple(args.theta), eps, K_max=args.kmax)
        err = abs(g.operator_gap() - float(g.exact_gap()))
        w.writerow([f"{eps:g}", g.k, g.l, g.box, f"{g.gap:.12g}", f"{err:.3g}", int(g.identities_hold())])


if __name__ == "__main__":
    main()
