"""Build one random multilinear packing and print its certificates.

    python3 scripts/packing_report.py --d 40 --m 2 --N 30 --out packing.json
"""
import argparse
import json

from lipreg.entropylab import PackingConfig, build_packing


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--d", type=int, default=40)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--N", type=int, default=None)
    ap.add_argument("--t", type=float, default=None)
    ap.add_argument("--lam", type=float, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = PackingConfig(d=args.d, m=args.m, N=args.N, t=args.t, lam=args.lam, seed=args.seed, workers=args.workers)
    res = build_packing(cfg)
    rep = res.to_dict()
    rep.pop("thetas")
    for key in ("D0", "N", "C0_hat", "lam", "t", "lipschitz_bound", "fourth_moment_average", "min_theta_dist",
                "min_smoothed_dist", "max_lipschitz_quotient"):
        print(f"{key}: {rep[key]}")
    print("flags:", json.dumps(rep["flags"], sort_keys=True))
    print("entropy:", json.dumps(rep["entropy"], sort_keys=True))
    print("certified:", res.certified)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(res.to_json())


if __name__ == "__main__":
    main()
