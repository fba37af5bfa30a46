"""Approximation error of the built-in Lipschitz targets against degree, per measure.

    python3 scripts/approx_rates.py --d 2 --m-max 8 --n-mc 1000000 > rates.csv
"""
import argparse
import sys

from lipreg.measures import KINDS, MeasureSpec
from lipreg.risklab import approx_curve
from lipreg.simulate import BUILTIN_LIPSCHITZ_TARGETS, target_centered


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--m-max", type=int, default=6)
    ap.add_argument("--n-mc", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kinds", nargs="*", default=list(KINDS))
    args = ap.parse_args()

    print("measure,target,d,m,value,stderr,gaussian_rate")
    for kind in args.kinds:
        mu = MeasureSpec(kind, args.d)
        for name in sorted(BUILTIN_LIPSCHITZ_TARGETS):
            t = target_centered(BUILTIN_LIPSCHITZ_TARGETS[name](), mu)
            curve = approx_curve(t, mu, range(args.m_max + 1), args.n_mc, args.seed)
            for e in curve.estimates:
                print(f"{kind},{name},{args.d},{e.m},{e.value!r},{e.stderr!r},{1 / (e.m + 1)!r}")
            if not curve.is_monotone():
                print(f"warning: {kind}/{name} curve not monotone within the band", file=sys.stderr)


if __name__ == "__main__":
    main()
