"""Bayesian optimisation of clustGeo's (alpha, lambda) with a mean-silhouette
fitness."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import qmc

from .cluster import clustgeo_labels, dissimilarity_parts, unique_locations, zscore
from .errors import MetricUndefinedError, OptimizationError
from .ingest import Checklist

log = logging.getLogger(__name__)

KAPPA = 2.576
N_INIT = 5
JITTER = 1e-8


def mean_silhouette(points, assignment) -> float:
    """Mean silhouette width under Euclidean distance.

    Points in singleton clusters score 0. Raises
    :class:`MetricUndefinedError` with fewer than two clusters.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    _, labels = np.unique(np.asarray(assignment), return_inverse=True)
    labels = labels.reshape(-1)
    k = labels.max() + 1 if len(labels) else 0
    if k < 2:
        raise MetricUndefinedError("silhouette needs at least two clusters")
    n = len(pts)
    sq = np.einsum("ij,ij->i", pts, pts)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T, 0.0))
    np.fill_diagonal(D, 0.0)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    sums = D @ onehot
    counts = onehot.sum(axis=0)
    own = counts[labels]
    a = sums[np.arange(n), labels] / np.maximum(own - 1, 1)
    other = sums / counts
    other[np.arange(n), labels] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(n), where=denom > 0)
    s[own == 1] = 0.0
    return float(s.mean())


def ucb(mu, sigma, kappa: float = KAPPA):
    return mu + kappa * sigma


@dataclass(frozen=True)
class GpSurrogate:
    """GP on the unit square with a squared-exponential kernel.

    Prior mean is constant (``mean``); ``noise`` is added to the kernel
    diagonal as a floor.
    """

    X: np.ndarray  # (n, d) in [0, 1]^d
    y: np.ndarray  # (n,)
    length_scales: np.ndarray
    signal_std: float = 1.0
    mean: float = 0.0
    noise: float = JITTER

    def kernel(self, A, B) -> np.ndarray:
        A = np.atleast_2d(A) / self.length_scales
        B = np.atleast_2d(B) / self.length_scales
        d2 = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
        return self.signal_std**2 * np.exp(-0.5 * np.maximum(d2, 0.0))


def _factor(gp: GpSurrogate):
    K = gp.kernel(gp.X, gp.X)
    jitter = gp.noise
    while jitter <= 1e-2 * max(gp.signal_std**2, 1e-12):
        try:
            return cho_factor(K + jitter * np.eye(len(K)), lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise OptimizationError("GP kernel matrix is not positive definite even with escalated jitter")


def gp_posterior(gp: GpSurrogate, query):
    """Posterior mean and standard deviation at one point or a batch."""
    if len(gp.y) == 0:
        raise ValueError("GP needs at least one observation")
    q = np.atleast_2d(np.asarray(query, dtype=float))
    cf = _factor(gp)
    ks = gp.kernel(gp.X, q)
    alpha = cho_solve(cf, gp.y - gp.mean)
    mu = gp.mean + ks.T @ alpha
    v = cho_solve(cf, ks)
    var = np.maximum(gp.signal_std**2 - np.sum(ks * v, axis=0), 0.0)
    sd = np.sqrt(var)
    if np.ndim(query) == 1:
        return float(mu[0]), float(sd[0])
    return mu, sd


def _log_marginal(gp: GpSurrogate) -> float:
    try:
        cf = _factor(gp)
    except OptimizationError:
        return -np.inf
    r = gp.y - gp.mean
    a = cho_solve(cf, r)
    return float(-0.5 * r @ a - np.sum(np.log(np.diag(cf[0]))) - 0.5 * len(r) * math.log(2 * math.pi))


_LS_GRID = np.geomspace(0.05, 3.0, 12)


def fit_surrogate(X, y) -> GpSurrogate:
    """Empirical-Bayes surrogate: mean and amplitude from the data, one
    length-scale per dimension chosen on a log grid by marginal likelihood."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    sd = float(y.std())
    base = GpSurrogate(X, y, np.ones(X.shape[1]), signal_std=sd if sd > 1e-9 else 1.0, mean=float(y.mean()))
    if len(y) < 3:
        return replace(base, length_scales=np.full(X.shape[1], 0.3))
    best, best_lml = base, -np.inf
    grids = np.meshgrid(*[_LS_GRID] * X.shape[1], indexing="ij")
    for ls in np.stack([g.ravel() for g in grids], axis=1):
        cand = replace(base, length_scales=ls)
        lml = _log_marginal(cand)
        if lml > best_lml:
            best, best_lml = cand, lml
    return best


def maximize_acquisition(gp: GpSurrogate, kappa: float = KAPPA, coarse: int = 51, fine: int = 21) -> np.ndarray:
    """Argmax of UCB over a lattice on the unit square, refined on a finer
    lattice spanning one coarse cell either side of the coarse winner."""
    d = gp.X.shape[1]
    axes = [np.linspace(0.0, 1.0, coarse)] * d
    cand = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    mu, sd = gp_posterior(gp, cand)
    best = cand[np.argmax(ucb(mu, sd, kappa))]
    h = 1.0 / (coarse - 1)
    axes = [np.linspace(max(0.0, b - h), min(1.0, b + h), fine) for b in best]
    cand = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    mu, sd = gp_posterior(gp, cand)
    return cand[np.argmax(ucb(mu, sd, kappa))]


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    alpha: float
    lambda_pct: float
    fitness: float
    phase: str  # "init" or "acquire"


@dataclass(frozen=True)
class TuneResult:
    best_alpha: float
    best_lambda: float
    best_fitness: float
    trace: tuple[TraceRow, ...] = field(default_factory=tuple)

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "phase", "alpha", "lambda", "fitness"])
            for r in self.trace:
                w.writerow([r.iteration, r.phase, repr(r.alpha), repr(r.lambda_pct), repr(r.fitness)])


def bayes_opt(
    fitness: Callable[[float, float], float],
    alpha_range=(0.01, 0.99),
    lambda_range=(10.0, 90.0),
    iterations: int = 30,
    seed: int = 0,
    kappa: float = KAPPA,
    n_init: int = N_INIT,
) -> TuneResult:
    """Maximise ``fitness(alpha, lambda)`` with a GP-UCB loop.

    A scrambled Halton design of ``n_init`` points seeds the surrogate, then
    each iteration evaluates the UCB maximiser. Failed or non-finite
    evaluations are recorded as -1.
    """
    lo = np.array([alpha_range[0], lambda_range[0]], dtype=float)
    span = np.array([alpha_range[1] - alpha_range[0], lambda_range[1] - lambda_range[0]], dtype=float)
    if np.any(span <= 0):
        raise ValueError("parameter ranges must have positive width")

    def evaluate(u):
        a, lam = (lo + u * span).tolist()
        try:
            f = float(fitness(a, lam))
        except Exception as exc:  # noqa: BLE001 - any failure scores -1 and the loop continues
            log.warning("fitness failed at alpha=%.5f lambda=%.4f: %s", a, lam, exc)
            f = -1.0
        if not math.isfinite(f):
            f = -1.0
        return a, lam, f

    U = qmc.Halton(d=2, scramble=True, seed=seed).random(n_init)
    rows, fx = [], []
    for i, u in enumerate(U):
        a, lam, f = evaluate(u)
        rows.append(TraceRow(i, a, lam, f, "init"))
        fx.append(f)
    for it in range(iterations):
        gp = fit_surrogate(U, fx)
        u = maximize_acquisition(gp, kappa)
        a, lam, f = evaluate(u)
        U = np.vstack([U, u])
        fx.append(f)
        rows.append(TraceRow(n_init + it, a, lam, f, "acquire"))
        log.info("BO iteration %d: alpha=%.5f lambda=%.4f fitness=%.6f", it + 1, a, lam, f)
    best = rows[int(np.argmax(fx))]
    return TuneResult(best.alpha, best.lambda_pct, best.fitness, tuple(rows))


def silhouette_features(cs: Sequence[Checklist]) -> np.ndarray:
    """z-scored (lat, lon, habitat features) per unique location, in the row
    order of :func:`siteclust.cluster.unique_locations`."""
    loc = unique_locations(cs)
    return zscore(np.column_stack([loc.coords, loc.features]))


def clustgeo_fitness(cs: Sequence[Checklist]) -> Callable[[float, float], float]:
    loc = unique_locations(cs)
    parts = dissimilarity_parts(loc)
    feats = zscore(np.column_stack([loc.coords, loc.features]))

    def fitness(alpha: float, lambda_pct: float) -> float:
        return mean_silhouette(feats, clustgeo_labels(loc, alpha, lambda_pct, parts))

    return fitness


def bayes_opt_clustgeo(
    cs: Sequence[Checklist],
    iterations: int = 30,
    alpha_range=(0.01, 0.99),
    lambda_range=(10.0, 90.0),
    seed: int = 0,
    kappa: float = KAPPA,
) -> TuneResult:
    """Tune clustGeo on coordinates and habitat features only (no detections)."""
    return bayes_opt(clustgeo_fitness(cs), alpha_range, lambda_range, iterations, seed, kappa)
