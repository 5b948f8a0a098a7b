"""Occupancy-probability lattices for map export."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .cluster import data_origin
from .geometry import project_local
from .ingest import Checklist
from .occupancy import FittedOccupancyModel, predict_psi


def lattice(bbox: tuple[float, float, float, float], resolution_deg: float) -> np.ndarray:
    """(lat, lon) nodes covering ``bbox = (lat_min, lon_min, lat_max, lon_max)``,
    row-major with latitude outermost."""
    lat_min, lon_min, lat_max, lon_max = bbox
    if resolution_deg <= 0 or lat_max < lat_min or lon_max < lon_min:
        raise ValueError("invalid lattice bbox or resolution")
    n_lat = int(np.floor((lat_max - lat_min) / resolution_deg + 1e-9)) + 1
    n_lon = int(np.floor((lon_max - lon_min) / resolution_deg + 1e-9)) + 1
    lats = lat_min + resolution_deg * np.arange(n_lat)
    lons = lon_min + resolution_deg * np.arange(n_lon)
    la, lo = np.meshgrid(lats, lons, indexing="ij")
    return np.column_stack([la.ravel(), lo.ravel()])


def bbox_of(cs: Sequence[Checklist]) -> tuple[float, float, float, float]:
    lat = [c.latitude for c in cs]
    lon = [c.longitude for c in cs]
    return (min(lat), min(lon), max(lat), max(lon))


def nearest_covariates(nodes: np.ndarray, cs: Sequence[Checklist]) -> np.ndarray:
    """Occupancy covariates of the closest observed checklist location.

    Stand-in for raster sampling when no covariate grid is supplied.
    """
    origin = data_origin(cs)
    cx, cy = project_local([c.latitude for c in cs], [c.longitude for c in cs], origin)
    nx, ny = project_local(nodes[:, 0], nodes[:, 1], origin)
    tree = cKDTree(np.column_stack([np.atleast_1d(cx), np.atleast_1d(cy)]))
    _, idx = tree.query(np.column_stack([np.atleast_1d(nx), np.atleast_1d(ny)]))
    feats = np.array([c.occupancy_features for c in cs], dtype=float)
    return feats[idx]


def psi_table(model: FittedOccupancyModel, nodes: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    """Rows of (lat, lon, psi)."""
    psi = predict_psi(model, covariates)
    return np.column_stack([nodes, np.atleast_1d(psi)])


def write_psi_table(path: str | Path, table: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "psi"])
        for lat, lon, psi in table:
            w.writerow([repr(float(lat)), repr(float(lon)), repr(float(psi))])


def read_covariate_grid(path: str | Path, feature_columns: Sequence[str]):
    """Read a ``lat, lon, <features...>`` table; returns (nodes, covariates)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    nodes = np.array([(float(r["lat"]), float(r["lon"])) for r in rows])
    cov = np.array([[float(r[c]) for c in feature_columns] for r in rows])
    return nodes, cov
