"""End-to-end steps shared by the command-line interface and scripts."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .cluster import SiteClustering, data_origin, read_clustering, write_clustering
from .config import RunConfig
from .errors import ConfigError
from .evaluate import EvalReport, HexGrid, run_benchmark
from .ingest import Checklist, DatasetSplit, filter_checklists, load_checklists, split_by_label, species_codes, year_rule
from .maps import bbox_of, lattice, nearest_covariates, psi_table, read_covariate_grid, write_psi_table
from .methods import MethodSpec, best_clustgeo_variants, run_method
from .occupancy import FittedOccupancyModel, build_dataset, fit, predict_observation_prob, predict_p, predict_psi
from .tune import TuneResult, bayes_opt_clustgeo

log = logging.getLogger(__name__)


def load_filtered(cfg: RunConfig) -> tuple[list[Checklist], list]:
    cs, diags = load_checklists(cfg.data_path, cfg.columns, cfg.delimiter)
    kept = filter_checklists(cs, cfg.max_distance_km, cfg.exclude_hotspots)
    log.info("loaded %d checklists (%d rejected rows), %d after filtering", len(cs), len(diags), len(kept))
    return kept, diags


def split(cfg: RunConfig, cs: list[Checklist]) -> DatasetSplit | None:
    if not cfg.has_split:
        return None
    labels = {y: "train" for y in cfg.train_years}
    labels.update({y: "test" for y in cfg.test_years})
    return split_by_label(cs, year_rule(labels), "+".join(map(str, cfg.train_years)),
                          "+".join(map(str, cfg.test_years)))


def training_and_test(cfg: RunConfig):
    cs, _ = load_filtered(cfg)
    sp = split(cfg, cs)
    if sp is None:
        return cs, None
    return list(sp.train), list(sp.test)


def species_for(cfg: RunConfig, cs) -> list[str]:
    return list(cfg.species) if cfg.species else species_codes(cs)


def concrete_methods(cfg: RunConfig) -> list[MethodSpec]:
    out: list[MethodSpec] = []
    for m in cfg.methods:
        for c in best_clustgeo_variants(m.params) if m.name == "best-clustGeo" else [m]:
            if c.label not in {o.label for o in out}:
                out.append(c)
    return out


def tune(cfg: RunConfig, train: list[Checklist]) -> TuneResult:
    t = cfg.tune
    return bayes_opt_clustgeo(
        train,
        iterations=int(t.get("iterations", 30)),
        alpha_range=tuple(t.get("alpha_range", (0.01, 0.99))),
        lambda_range=tuple(t.get("lambda_range", (10.0, 90.0))),
        seed=cfg.seed,
    )


def write_tune(out_dir: Path, res: TuneResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    res.write_trace(out_dir / "tune_trace.csv")
    (out_dir / "tune_result.json").write_text(json.dumps(
        {"best_alpha": res.best_alpha, "best_lambda": res.best_lambda, "best_fitness": res.best_fitness},
        indent=2, sort_keys=True) + "\n")


def cluster_dir(cfg: RunConfig) -> Path:
    return cfg.out_dir / "clusters"


def cluster_all(cfg: RunConfig, train: list[Checklist]) -> dict[str, SiteClustering]:
    out = {}
    d = cluster_dir(cfg)
    d.mkdir(parents=True, exist_ok=True)
    for m in concrete_methods(cfg):
        tr = None
        if m.name == "BayesOptClustGeo":
            tr = tune(cfg, train)
            write_tune(cfg.out_dir, tr)
        sc = run_method(m, train, cfg.seed, tune_result=tr)
        write_clustering(d / f"{m.label}.csv", sc, {"seed": cfg.seed})
        out[m.label] = sc
    return out


def load_clustering(cfg: RunConfig, label: str) -> SiteClustering:
    path = cluster_dir(cfg) / f"{label}.csv"
    if not path.exists():
        raise FileNotFoundError(f"clustering file not found: {path} (run the cluster command first)")
    return read_clustering(path)


def model_path(cfg: RunConfig, label: str, species: str) -> Path:
    return cfg.out_dir / "models" / label / f"{species}.json"


def fit_all(cfg: RunConfig, train: list[Checklist]) -> list[tuple[str, str, str]]:
    """Fit and save one model per (method, species); returns failures."""
    failures = []
    for m in concrete_methods(cfg):
        sc = load_clustering(cfg, m.label)
        for sp in species_for(cfg, train):
            path = model_path(cfg, m.label, sp)
            path.parent.mkdir(parents=True, exist_ok=True)
            try:
                model = fit(build_dataset(sc, train, sp), restarts=cfg.restarts, seed=cfg.seed)
            except Exception as exc:  # noqa: BLE001 - recorded, run continues
                failures.append((sp, m.label, f"{type(exc).__name__}: {exc}"))
                continue
            model.save(path)
    return failures


def load_model(cfg: RunConfig, label: str, species: str) -> FittedOccupancyModel:
    return FittedOccupancyModel.load(model_path(cfg, label, species))


def predict_all(cfg: RunConfig, target: list[Checklist]) -> list[Path]:
    X = np.array([c.occupancy_features for c in target], dtype=float)
    W = np.array([c.detection_features for c in target], dtype=float)
    written = []
    for m in concrete_methods(cfg):
        for sp in species_for(cfg, target):
            model = load_model(cfg, m.label, sp)
            psi, p = predict_psi(model, X), predict_p(model, W)
            obs = predict_observation_prob(model, X, W)
            path = cfg.out_dir / "predictions" / m.label / f"{sp}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["checklist_id", "detected", "psi", "p", "obs_prob"])
                for c, a, b, o in zip(target, psi, p, obs):
                    w.writerow([c.id, c.detections.get(sp, ""), repr(float(a)), repr(float(b)), repr(float(o))])
            written.append(path)
    return written


def map_all(cfg: RunConfig, reference: list[Checklist]) -> list[Path]:
    mc = cfg.map
    if "covariates" in mc:
        nodes, cov = read_covariate_grid(Path(mc["covariates"]), cfg.columns.occupancy_features)
    else:
        bbox = tuple(mc["bbox"]) if "bbox" in mc else bbox_of(reference)
        nodes = lattice(bbox, float(mc.get("resolution_deg", 0.01)))
        cov = nearest_covariates(nodes, reference)
    written = []
    for m in concrete_methods(cfg):
        for sp in species_for(cfg, reference):
            model = load_model(cfg, m.label, sp)
            path = cfg.out_dir / "maps" / m.label / f"{sp}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_psi_table(path, psi_table(model, nodes, cov))
            written.append(path)
    return written


def benchmark(cfg: RunConfig) -> EvalReport:
    cs, _ = load_filtered(cfg)
    sp = split(cfg, cs)
    if sp is None:
        raise ConfigError("benchmark needs [split] train and test years")
    methods = list(cfg.methods)
    if "lat-long" not in {m.label for m in methods}:
        methods.insert(0, MethodSpec("lat-long"))
    clusterings = {}
    for m in methods:
        if m.name == "BayesOptClustGeo":
            tr = tune(cfg, list(sp.train))
            write_tune(cfg.out_dir, tr)
            clusterings[m.label] = run_method(m, list(sp.train), cfg.seed, tune_result=tr)
    grid = HexGrid(cfg.hex_spacing_m, data_origin(list(sp.test)))
    report = run_benchmark(
        sp, methods, species_for(cfg, sp.train), repeats=cfg.repeats, seed=cfg.seed, grid=grid,
        restarts=cfg.restarts, workers=cfg.workers, clusterings=clusterings,
    )
    report.write(cfg.out_dir)
    return report
