"""Run every JSON config in a directory through the experiment runner.

    python3 scripts/run_configs.py configs/ --out-dir runs/ --skip packing
"""
import argparse
import pathlib
import sys

from lipreg import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("config_dir", nargs="?", default="configs")
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--skip", nargs="*", default=[])
    args = ap.parse_args()
    status = 0
    for path in sorted(pathlib.Path(args.config_dir).glob("*.json")):
        if path.stem in args.skip:
            continue
        print(f"== {path.name}", flush=True)
        code = cli.main(["run", "--config", str(path), "--out-dir", str(pathlib.Path(args.out_dir) / path.stem),
                         "--threads", str(args.threads)])
        status = status or code
    sys.exit(status)


if __name__ == "__main__":
    main()
