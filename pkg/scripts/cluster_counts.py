"""Print site counts of every clustering method on a config's training years.

    python3 scripts/cluster_counts.py configs/released.toml
"""

import argparse
import time

from siteclust.cluster import (
    cluster_bounded,
    cluster_clustgeo,
    cluster_dbsc,
    cluster_exact_coord,
    cluster_grid,
    cluster_trivial,
    clustgeo_k,
)
from siteclust.config import load_config
from siteclust.pipeline import training_and_test


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--alpha", type=float, default=0.25, help="clustGeo mixing weight")
    args = ap.parse_args()

    cfg = load_config(args.config)
    train, _ = training_and_test(cfg)
    print(f"{len(train)} training checklists")
    t0 = time.perf_counter()
    ll = cluster_exact_coord(train)
    rows = [
        ("lat-long", ll.n_sites, f"largest site {int(ll.sizes().max())}"),
        ("SVS", cluster_trivial(train).n_sites, ""),
        ("rounded-4", cluster_exact_coord(train, 4).n_sites, ""),
    ]
    for label, same in (("2to10", False), ("2to10-sameObs", True)):
        sc = cluster_bounded(train, same_observer=same, seed=cfg.seed)
        rows.append((label, sc.n_sites, f"{len(sc.assignments)} checklists kept"))
    for lam in (60, 70, 80, 90):
        sc = cluster_clustgeo(train, args.alpha, lam)
        rows.append((f"clustGeo-{round(args.alpha * 100)}-{lam}", sc.n_sites,
                     f"K = {clustgeo_k(lam, ll.n_sites)}"))
    rows.append(("1-kmSq", cluster_grid(train).n_sites, ""))
    rows.append(("DBSC", cluster_dbsc(train).n_sites, ""))
    for label, n, note in rows:
        print(f"{label:>18s} {n:6d}  {note}")
    print(f"clustered in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
