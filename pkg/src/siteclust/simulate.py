"""Synthetic occupancy data with known parameters, plus a definitional
likelihood used to cross-check the optimised implementation."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
from scipy.special import expit

from .geometry import EARTH_RADIUS_M
from .ingest import ColumnMap, Checklist
from .occupancy import OccupancyDataset

SIM_SPECIES = "SIM"
SIM_COLUMNS = ColumnMap(
    detection_features=("w1", "w2", "w3", "w4", "w5"),
    occupancy_features=("x1", "x2", "x3", "x4", "x5"),
    species=(SIM_SPECIES,),
)


@dataclass(frozen=True)
class SimulationSpec:
    n_locations: int
    beta_true: tuple[float, ...]
    gamma_true: tuple[float, ...]
    visits_per_site: int | tuple[int, int] = 3
    blob_count: int = 5
    seed: int = 0
    origin: tuple[float, float] = (42.5, -123.5)
    extent_m: float = 50_000.0
    blob_radius_m: float = 2_000.0
    blob_feature_sd: float = 0.5
    years: tuple[int, ...] = (2017,)

    def __post_init__(self):
        if self.n_locations < 1:
            raise ValueError("n_locations must be >= 1")
        if self.blob_count < 1:
            raise ValueError("blob_count must be >= 1")
        if len(self.beta_true) != 6 or len(self.gamma_true) != 6:
            raise ValueError("beta_true and gamma_true need 6 entries (intercept + 5 slopes)")
        if not self.years:
            raise ValueError("years must not be empty")


@dataclass(frozen=True)
class SimulationTruth:
    z: np.ndarray  # (M,) latent occupancy per site
    z_visit: np.ndarray  # (N,) occupancy state each visit was drawn under
    psi: np.ndarray  # (M,)
    p: np.ndarray  # (N,)
    blob: np.ndarray  # (M,) blob membership


def _visit_counts(spec: SimulationSpec, rng) -> np.ndarray:
    v = spec.visits_per_site
    if isinstance(v, int):
        if v < 1:
            raise ValueError("visits_per_site must be >= 1")
        return np.full(spec.n_locations, v, dtype=np.int64)
    lo, hi = v
    if not 1 <= lo <= hi:
        raise ValueError("visits_per_site range must satisfy 1 <= low <= high")
    return rng.integers(lo, hi + 1, size=spec.n_locations)


def simulate_dataset(spec: SimulationSpec):
    """Draw sites, covariates, latent occupancy and detections.

    Returns ``(dataset, truth, checklists)``; each site is one location whose
    visits are emitted as separate checklists at identical coordinates.
    """
    rng = np.random.default_rng(spec.seed)
    m = spec.n_locations
    beta = np.asarray(spec.beta_true, dtype=float)
    gamma = np.asarray(spec.gamma_true, dtype=float)

    blob_xy = rng.uniform(0.0, spec.extent_m, size=(spec.blob_count, 2))
    blob_feat = rng.normal(0.0, spec.blob_feature_sd, size=(spec.blob_count, 5))
    blob = rng.integers(spec.blob_count, size=m)
    xy = blob_xy[blob] + rng.normal(0.0, spec.blob_radius_m, size=(m, 2))
    feats = blob_feat[blob] + rng.normal(size=(m, 5))
    X = np.column_stack([np.ones(m), feats])

    T = _visit_counts(spec, rng)
    site_index = np.repeat(np.arange(m), T)
    n = len(site_index)
    W = np.column_stack([np.ones(n), rng.normal(size=(n, 5))])

    psi = expit(X @ beta)
    z = (rng.random(m) < psi).astype(np.int64)
    p = expit(W @ gamma)
    z_visit = z[site_index]
    y = (rng.random(n) < z_visit * p).astype(float)

    ds = OccupancyDataset(
        species=SIM_SPECIES,
        site_ids=tuple(str(i) for i in range(m)),
        X=X,
        W=W,
        y=y,
        site_index=site_index,
    )

    lat0, lon0 = spec.origin
    lat = lat0 + np.degrees(xy[:, 1] / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(xy[:, 0] / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    observers = rng.integers(max(1, m // 4), size=n)
    day = rng.integers(0, 56, size=n)
    year = np.asarray(spec.years)[rng.integers(len(spec.years), size=n)]
    checklists = []
    visit_no = np.zeros(m, dtype=np.int64)
    for k in range(n):
        i = site_index[k]
        checklists.append(
            Checklist(
                id=f"S{i}_{visit_no[i]}",
                latitude=float(lat[i]),
                longitude=float(lon[i]),
                observer_id=f"obs{observers[k]}",
                date=date(int(year[k]), 5, 15) + timedelta(days=int(day[k])),
                effort_distance_km=0.0,
                is_hotspot=False,
                detection_features=tuple(float(v) for v in W[k, 1:]),
                occupancy_features=tuple(float(v) for v in feats[i]),
                detections={SIM_SPECIES: int(y[k])},
            )
        )
        visit_no[i] += 1
    truth = SimulationTruth(z=z, z_visit=z_visit, psi=psi, p=p, blob=blob)
    return ds, truth, checklists


def brute_force_dataset_loglik(beta, gamma, ds: OccupancyDataset) -> float:
    """Sum over sites of log( sum_z P(z) prod_t P(y_t | z) ), evaluated
    literally in probability space. Keep T_i small.

    Each sigmoid pair is formed from whichever of sigma(eta), sigma(-eta) is
    smaller (accurate to relative rounding) with the other as its exact
    rational complement. The enumeration is summed in exact rationals and
    the log taken as log1p(lik - 1), so a likelihood close to 1 is not
    rounded before its log.
    """
    beta = [float(b) for b in beta]
    gamma = [float(g) for g in gamma]

    def sig(eta):
        small = Fraction(1.0 / (1.0 + math.exp(abs(eta))))
        return 1 - small if eta > 0 else small

    total = 0.0
    for i in range(ds.n_sites):
        rows = np.flatnonzero(ds.site_index == i)
        eta_x = math.fsum(b * x for b, x in zip(beta, ds.X[i]))
        lik = Fraction(0)
        for z, prior in ((1, sig(eta_x)), (0, sig(-eta_x))):
            prod = prior
            for t in rows:
                eta_w = math.fsum(g * w for g, w in zip(gamma, ds.W[t]))
                if z == 1:
                    prod *= sig(eta_w) if ds.y[t] == 1 else sig(-eta_w)
                else:
                    prod *= 0 if ds.y[t] == 1 else 1
            lik += prod
        total += math.log(lik) if lik < Fraction(1, 2) else math.log1p(float(lik - 1))
    return total
