"""Command-line entry point: ``siteclust <command> --config run.toml``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import pipeline
from .cluster import cluster_stats
from .config import load_config
from .errors import ConfigError, ParameterError, SiteClustError
from .ingest import write_checklists
from .methods import METHODS
from .simulate import SIM_COLUMNS, SimulationSpec, simulate_dataset

log = logging.getLogger("siteclust")

COMMANDS = ("ingest", "cluster", "tune", "fit", "predict", "map", "benchmark", "simulate")


class UsageError(Exception):
    pass


def cmd_ingest(cfg) -> int:
    cs, diags = pipeline.load_filtered(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_checklists(cfg.out_dir / "checklists_filtered.csv", cs, cfg.columns, cfg.delimiter)
    with open(cfg.out_dir / "ingest_diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "message"])
        w.writerows((d.row, d.message) for d in diags)
    print(f"{len(cs)} checklists kept, {len(diags)} rows rejected")
    return 0


def cmd_cluster(cfg) -> int:
    if not cfg.methods:
        raise UsageError(f"no methods configured; valid names: {', '.join(METHODS)}")
    train, _ = pipeline.training_and_test(cfg)
    for label, sc in pipeline.cluster_all(cfg, train).items():
        st = cluster_stats(sc)
        print(f"{label}: {st['n_clusters']} sites over {st['n_points']} checklists")
    return 0


def cmd_tune(cfg) -> int:
    train, _ = pipeline.training_and_test(cfg)
    res = pipeline.tune(cfg, train)
    pipeline.write_tune(cfg.out_dir, res)
    print(f"alpha={res.best_alpha:.5f} lambda={res.best_lambda:.4f} silhouette={res.best_fitness:.5f}")
    return 0


def cmd_fit(cfg) -> int:
    train, _ = pipeline.training_and_test(cfg)
    failures = pipeline.fit_all(cfg, train)
    for sp, m, err in failures:
        print(f"fit failed for {sp} / {m}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_predict(cfg) -> int:
    train, test = pipeline.training_and_test(cfg)
    paths = pipeline.predict_all(cfg, test if test is not None else train)
    print(f"wrote {len(paths)} prediction tables")
    return 0


def cmd_map(cfg) -> int:
    train, _ = pipeline.training_and_test(cfg)
    paths = pipeline.map_all(cfg, train)
    print(f"wrote {len(paths)} occupancy lattices")
    return 0


def cmd_benchmark(cfg) -> int:
    report = pipeline.benchmark(cfg)
    for m, d in sorted(report.method_mean_delta().items(), key=lambda kv: -kv[1]):
        print(f"{m:>20s}  mean delta {d:+.3f}%")
    for sp, m, err in report.failures:
        print(f"failure {sp} / {m}: {err}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_simulate(cfg) -> int:
    s = cfg.simulate
    rng = np.random.default_rng(cfg.seed)
    beta = tuple(s.get("beta", rng.uniform(-1, 1, 6).tolist()))
    gamma = tuple(s.get("gamma", rng.uniform(-1, 1, 6).tolist()))
    visits = s.get("visits_per_site", 3)
    spec = SimulationSpec(
        n_locations=int(s.get("n_locations", 500)),
        beta_true=beta,
        gamma_true=gamma,
        visits_per_site=tuple(visits) if isinstance(visits, list) else int(visits),
        blob_count=int(s.get("blob_count", 5)),
        seed=cfg.seed,
        years=tuple(int(y) for y in s.get("years", [2017])),
    )
    ds, truth, cs = simulate_dataset(spec)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_checklists(cfg.out_dir / "simulated_checklists.csv", cs, SIM_COLUMNS)
    with open(cfg.out_dir / "simulated_truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "z", "psi"])
        for i, (z, psi) in enumerate(zip(truth.z, truth.psi)):
            w.writerow([i, int(z), repr(float(psi))])
    with open(cfg.out_dir / "simulated_parameters.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", "index", "value"])
        w.writerows(("beta", i, repr(float(v))) for i, v in enumerate(beta))
        w.writerows(("gamma", i, repr(float(v))) for i, v in enumerate(gamma))
    print(f"simulated {ds.n_sites} sites, {ds.n_visits} checklists")
    return 0


HANDLERS = {
    "ingest": cmd_ingest,
    "cluster": cmd_cluster,
    "tune": cmd_tune,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "map": cmd_map,
    "benchmark": cmd_benchmark,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siteclust", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--workers", type=int, default=None, help="parallel fits in the benchmark")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, workers=args.workers,
                          require_data=args.command != "simulate")
        return HANDLERS[args.command](cfg)
    except (ConfigError, ParameterError, UsageError) as exc:
        print(f"siteclust {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (SiteClustError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"siteclust {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
