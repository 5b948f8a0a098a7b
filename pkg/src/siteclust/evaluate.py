"""Spatially subsampled test sets, ranking metrics and the benchmark loop."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .cluster import SiteClustering, data_origin
from .errors import MetricUndefinedError, ParameterError
from .geometry import PlanarPoint, project_local
from .ingest import Checklist, DatasetSplit
from .methods import MethodSpec, best_clustgeo_variants, run_method
from .occupancy import FittedOccupancyModel, build_dataset, fit, predict_observation_prob

log = logging.getLogger(__name__)

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class HexGrid:
    """Pointy-top hexagonal lattice on the local projection about ``origin``.

    Neighbouring centres are ``spacing_m`` apart; cell (0, 0) is centred on
    the origin.
    """

    spacing_m: float = 5000.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.spacing_m <= 0:
            raise ParameterError("hex spacing must be positive")

    def center(self, q: int, r: int) -> tuple[float, float]:
        return self.spacing_m * (q + r / 2.0), self.spacing_m * (SQRT3 / 2.0) * r

    def cells(self, x, y) -> np.ndarray:
        """Axial (q, r) of the nearest centre for planar coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rf = y / (self.spacing_m * SQRT3 / 2.0)
        qf = x / self.spacing_m - rf / 2.0
        sf = -qf - rf
        q, r, s = np.round(qf), np.round(rf), np.round(sf)
        dq, dr, ds = np.abs(q - qf), np.abs(r - rf), np.abs(s - sf)
        fix_q = (dq > dr) & (dq > ds)
        fix_r = ~fix_q & (dr > ds)
        q = np.where(fix_q, -r - s, q)
        r = np.where(fix_r, -q - s, r)
        return np.column_stack([q, r]).astype(np.int64)


def hex_assign(points: Sequence[PlanarPoint], grid: HexGrid) -> list[tuple[int, int]]:
    if not points:
        return []
    cells = grid.cells([p.x for p in points], [p.y for p in points])
    return [tuple(map(int, c)) for c in cells]


def checklist_cells(cs: Sequence[Checklist], grid: HexGrid) -> np.ndarray:
    x, y = project_local([c.latitude for c in cs], [c.longitude for c in cs], grid.origin)
    return grid.cells(np.atleast_1d(x), np.atleast_1d(y))


def spatial_subsample(test: Sequence[Checklist], species: str, grid: HexGrid, seed) -> list[Checklist]:
    """Per hexagon keep at most one random detection and one random
    non-detection. Cells are visited in sorted order."""
    if not test:
        return []
    rng = np.random.default_rng(seed)
    cells = checklist_cells(test, grid)
    groups: dict[tuple[int, int, int], list[int]] = {}
    for i, (c, cell) in enumerate(zip(test, cells)):
        groups.setdefault((int(cell[0]), int(cell[1]), c.detections[species]), []).append(i)
    keep = []
    for key in sorted(groups):
        members = groups[key]
        keep.append(members[rng.integers(len(members))])
    return [test[i] for i in sorted(keep)]


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return s, y.astype(bool)


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney U statistic; ties count one half."""
    s, y = _check_binary(scores, labels)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise MetricUndefinedError("AUC needs both positive and negative labels")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def auprc(scores, labels) -> float:
    """Average precision: sum over distinct descending thresholds of
    (recall gain) x precision, with tied scores forming one threshold."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricUndefinedError("AUPRC needs at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last]
    seen = np.flatnonzero(last) + 1
    precision = tp / seen
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_gain * precision))


def pct_improvement(auc_a: float, auc_ref: float) -> float:
    """Percentage improvement of ``auc_a`` over ``auc_ref``."""
    if auc_ref == 0:
        raise ZeroDivisionError("reference AUC is zero")
    if auc_ref < 0:
        raise ValueError("reference AUC must be positive")
    return (auc_a - auc_ref) / auc_ref * 100.0


@dataclass(frozen=True)
class ResultRow:
    species: str
    method: str
    repeat: int
    auc: float
    auprc: float
    delta: float


@dataclass
class EvalReport:
    rows: list[ResultRow] = field(default_factory=list)
    failures: list[tuple[str, str, str]] = field(default_factory=list)
    chosen: dict[str, str] = field(default_factory=dict)  # species -> best clustGeo variant
    repeats: int = 0

    def values(self, species: str, method: str, attr: str = "auc") -> list[float]:
        return [getattr(r, attr) for r in self.rows if r.species == species and r.method == method]

    def summary(self) -> list[dict]:
        keys = list(dict.fromkeys((r.species, r.method) for r in self.rows))
        out = []
        for sp, m in keys:
            rec = {"species": sp, "method": m}
            for attr in ("auc", "auprc", "delta"):
                v = np.array(self.values(sp, m, attr), dtype=float)
                ok = v[np.isfinite(v)]
                rec[f"{attr}_mean"] = float(ok.mean()) if len(ok) else float("nan")
                rec[f"{attr}_std"] = float(ok.std(ddof=1)) if len(ok) > 1 else float("nan")
            rec["n"] = int(np.isfinite(np.array(self.values(sp, m), dtype=float)).sum())
            rec["variant"] = self.chosen.get(sp, "") if m == "best-clustGeo" else ""
            out.append(rec)
        return out

    def method_mean_delta(self) -> dict[str, float]:
        """Mean over species of each species' mean delta."""
        per: dict[str, list[float]] = {}
        for rec in self.summary():
            if math.isfinite(rec["delta_mean"]):
                per.setdefault(rec["method"], []).append(rec["delta_mean"])
        return {m: float(np.mean(v)) for m, v in per.items()}

    def write(self, out_dir: str | Path, prefix: str = "benchmark") -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "results": out_dir / f"{prefix}_results.csv",
            "summary": out_dir / f"{prefix}_summary.csv",
            "failures": out_dir / f"{prefix}_failures.csv",
        }
        with open(paths["results"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["species", "method", "repeat", "auc", "auprc", "delta"])
            for r in self.rows:
                w.writerow([r.species, r.method, r.repeat, _fmt(r.auc), _fmt(r.auprc), _fmt(r.delta)])
        summary = self.summary()
        cols = ["species", "method", "n", "auc_mean", "auc_std", "auprc_mean", "auprc_std",
                "delta_mean", "delta_std", "variant"]
        with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for rec in summary:
                w.writerow([_fmt(rec[c]) if isinstance(rec[c], float) else rec[c] for c in cols])
        with open(paths["failures"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["species", "method", "error"])
            w.writerows(self.failures)
        return paths


def _fmt(v: float) -> str:
    return "NA" if v is None or not math.isfinite(v) else repr(float(v))


def _fit_one(args):
    clustering, train, species, seed, restarts = args
    try:
        ds = build_dataset(clustering, train, species)
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return fit(ds, restarts=restarts, seed=seed), None
    except Exception as exc:  # noqa: BLE001 - failures are recorded per (species, method)
        return None, f"{type(exc).__name__}: {exc}"


def _design(cs: Sequence[Checklist]):
    return (
        np.array([c.occupancy_features for c in cs], dtype=float),
        np.array([c.detection_features for c in cs], dtype=float),
    )


def run_benchmark(
    split: DatasetSplit,
    methods: Sequence[MethodSpec],
    species_list: Sequence[str],
    repeats: int = 25,
    seed: int = 0,
    grid: HexGrid | None = None,
    restarts: int = 5,
    workers: int = 1,
    clusterings: dict[str, SiteClustering] | None = None,
) -> EvalReport:
    """Cluster the training set per method, fit one model per (species,
    method), then score ``repeats`` spatial subsamples of the test set.

    The delta of every row is taken against lat-long on the same subsample.
    ``best-clustGeo`` expands into the clustGeo grid and keeps, per species,
    the variant with the highest mean test AUC.
    """
    labels = [m.label for m in methods]
    if "lat-long" not in labels:
        raise ParameterError("methods must include lat-long (the delta reference)")
    train, test = list(split.train), list(split.test)
    if grid is None:
        grid = HexGrid(5000.0, data_origin(test))

    concrete: list[MethodSpec] = []
    best_variants: list[str] = []
    for m in methods:
        if m.name == "best-clustGeo":
            for v in best_clustgeo_variants(m.params):
                best_variants.append(v.label)
                if v.label not in {c.label for c in concrete}:
                    concrete.append(v)
        elif m.label not in {c.label for c in concrete}:
            concrete.append(m)

    clusterings = dict(clusterings or {})
    for m in concrete:
        if m.label not in clusterings:
            log.info("clustering training data with %s", m.label)
            clusterings[m.label] = run_method(m, train, seed)

    keys = [(sp, m.label) for sp in species_list for m in concrete]
    jobs = [(clusterings[label], train, sp, seed, restarts) for sp, label in keys]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            fitted = list(ex.map(_fit_one, jobs))
    else:
        fitted = [_fit_one(j) for j in jobs]

    report = EvalReport(repeats=repeats)
    models: dict[tuple[str, str], FittedOccupancyModel] = {}
    for key, (model, err) in zip(keys, fitted):
        if model is None:
            report.failures.append((*key, err))
        else:
            models[key] = model

    Xt, Wt = _design(test)
    index = {c.id: i for i, c in enumerate(test)}
    for si, sp in enumerate(species_list):
        scores = {
            m.label: predict_observation_prob(models[(sp, m.label)], Xt, Wt)
            for m in concrete
            if (sp, m.label) in models
        }
        per: dict[str, list[tuple[float, float]]] = {m.label: [] for m in concrete}
        for r in range(repeats):
            sub = spatial_subsample(test, sp, grid, seed=[seed, si, r])
            rows = np.array([index[c.id] for c in sub], dtype=np.int64)
            y = np.array([c.detections[sp] for c in sub])
            for label in per:
                if label not in scores:
                    per[label].append((math.nan, math.nan))
                    continue
                s = scores[label][rows]
                try:
                    per[label].append((auc(s, y), auprc(s, y)))
                except MetricUndefinedError as exc:
                    per[label].append((math.nan, math.nan))
                    if r == 0:
                        report.failures.append((sp, label, f"MetricUndefinedError: {exc}"))

        out_methods = list(labels)
        if best_variants:
            means = {}
            for v in best_variants:
                aucs = np.array([a for a, _ in per[v]])
                means[v] = aucs[np.isfinite(aucs)].mean() if np.isfinite(aucs).any() else -np.inf
            chosen = max(best_variants, key=lambda v: (means[v], -best_variants.index(v)))
            report.chosen[sp] = chosen
            per["best-clustGeo"] = per[chosen]
        ref = per["lat-long"]
        for label in out_methods:
            for r, (a, ap) in enumerate(per[label]):
                ra = ref[r][0]
                d = pct_improvement(a, ra) if math.isfinite(a) and math.isfinite(ra) and ra > 0 else math.nan
                report.rows.append(ResultRow(sp, label, r, a, ap, d))
    return report
