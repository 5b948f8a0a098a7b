"""Run the subsampled AUC benchmark and print per-method delta summaries.

    python3 scripts/run_benchmark.py configs/synthetic.toml --workers 4
"""

import argparse
import math
from statistics import mean, median

from siteclust.config import load_config
from siteclust.pipeline import benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = load_config(args.config, out=args.out, workers=args.workers)
    rep = benchmark(cfg)
    per: dict[str, list[float]] = {}
    for rec in rep.summary():
        if math.isfinite(rec["delta_mean"]):
            per.setdefault(rec["method"], []).append(rec["delta_mean"])
    print(f"{'method':>20s} {'mean':>9s} {'median':>9s} species")
    for m, v in sorted(per.items(), key=lambda kv: -mean(kv[1])):
        print(f"{m:>20s} {mean(v):+9.3f} {median(v):+9.3f} {len(v)}")
    for sp, variant in sorted(rep.chosen.items()):
        print(f"best clustGeo for {sp}: {variant}")
    for sp, m, err in rep.failures:
        print(f"failed {sp} / {m}: {err}")
    print(f"results in {cfg.out_dir}")


if __name__ == "__main__":
    main()
