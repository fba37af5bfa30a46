"""Log-log slope of P(|P(X)| <= t) in t for unit-norm one-variable Gaussian polynomials.

The slope reflects the order of the real zeros of P, not its degree: h2 has
two simple zeros (slope 1) while x^2 / sqrt(3) has a double zero (slope 1/2).
"""
import argparse
import math

import numpy as np

from lipreg.covdiag import small_ball_check
from lipreg.measures import GAUSSIAN, MeasureSpec
from lipreg.polybasis import PolyInBasis, enumerate_indices


def polys(mu):
    idx = enumerate_indices(1, 4)
    yield "h1", PolyInBasis.basis_element((1,), mu, m=4)
    yield "h2", PolyInBasis.basis_element((2,), mu, m=4)
    yield "h3", PolyInBasis.basis_element((3,), mu, m=4)
    # x^2 = 1 + sqrt(2) h2, norm sqrt(3)
    yield "x^2/sqrt3", PolyInBasis(idx, np.array([1, 0, math.sqrt(2), 0, 0]) / math.sqrt(3), mu)
    # x^4 = 3 + 6 sqrt(2) h2 + sqrt(24) h4, norm sqrt(105)
    yield "x^4/sqrt105", PolyInBasis(idx, np.array([3, 0, 6 * math.sqrt(2), 0, math.sqrt(24)]) / math.sqrt(105), mu)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n-mc", type=int, default=10**6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    mu = MeasureSpec(GAUSSIAN, 1)
    t_grid = np.logspace(-3, -1, 9)
    print("poly,degree,slope,empirical_constant")
    for name, p in polys(mu):
        tab = small_ball_check(p, mu, t_grid, args.n_mc, args.seed)
        print(f"{name},{p.degree},{tab.slope()!r},{tab.empirical_constant!r}")


if __name__ == "__main__":
    main()
