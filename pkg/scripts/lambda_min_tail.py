"""Frequency of lambda_min(C_n) < 1/2 at n = k D, with a binomial standard error.

    python3 scripts/lambda_min_tail.py --d 4 --m 2 --factor 50 --reps 5000
"""
import argparse
import math

import numpy as np

from lipreg.covdiag import lambda_min_tail
from lipreg.measures import GAUSSIAN, KINDS, MeasureSpec
from lipreg.polybasis import basis_size


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--kind", default=GAUSSIAN, choices=KINDS)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--factor", type=int, nargs="*", default=[10, 25, 50, 100])
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threshold", type=float, default=0.5)
    args = ap.parse_args()
    D = basis_size(args.d, args.m)
    mu = MeasureSpec(args.kind, args.d)
    print("n,D,reps,frac_below,stderr,p_zero_in_100,min_lambda")
    for k in args.factor:
        tail = lambda_min_tail(mu, args.d, args.m, k * D, args.reps, args.seed)
        p = float(np.mean(tail.values < args.threshold))
        se = math.sqrt(p * (1 - p) / args.reps)
        print(f"{k * D},{D},{args.reps},{p!r},{se!r},{(1 - p) ** 100!r},{float(tail.values.min())!r}")


if __name__ == "__main__":
    main()
