"""Empirical violation rate of the one-sided bound across n and eps.

The rates should sit at or below eps; the bound is loose, so expect zeros.
"""
import argparse

from ibmht.harness import coverage_check
from ibmht.prob import dsbs, identity_encoder


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=0.1)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    src, enc = dsbs(args.p), identity_encoder(2)
    levels = (0.05, 0.1, 0.3, 0.5)
    print("n".rjust(8) + "  " + "".join(f"eps={e:<6}" for e in levels))
    for n in (100, 500, 2000, 10000):
        rates = [coverage_check(src, enc, e, n, args.reps, seed=args.seed) for e in levels]
        print(f"{n:8d}  " + "".join(f"{r:<10.3f}" for r in rates))


if __name__ == "__main__":
    main()
