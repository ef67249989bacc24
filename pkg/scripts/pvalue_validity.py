"""Check that p-values are super-uniform for an encoder sitting just below alpha."""
import argparse
import math

from ibmht.harness import boundary_null_encoder, pvalue_validity_check
from ibmht.prob import compose, dsbs, exact_mi, identity_encoder


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.2)
    ap.add_argument("--gap", type=float, default=0.01, help="alpha minus the encoder's exact I(T;Y)")
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    src = dsbs(0.1)
    enc = boundary_null_encoder(src, identity_encoder(2), args.alpha - args.gap)
    print(f"exact I(T;Y) = {exact_mi(compose(src, enc)[0]):.6f}, alpha = {args.alpha}")
    rates = pvalue_validity_check(src, enc, args.alpha, args.n, args.reps, levels=(0.05, 0.1, 0.2, 0.5), seed=args.seed)
    for u, r in rates.items():
        limit = u + 3 * math.sqrt(u * (1 - u) / args.reps)
        print(f"  Pr[p <= {u}] = {r:.4f}  (limit {limit:.4f})")


if __name__ == "__main__":
    main()
