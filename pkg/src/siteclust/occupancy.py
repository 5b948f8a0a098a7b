"""Single-season occupancy model: dataset assembly, likelihood, ML fitting
and prediction."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .cluster import SiteClustering
from .errors import DegenerateDataError, OptimizationError
from .ingest import Checklist

log = logging.getLogger(__name__)

ETA_CLIP = 35.0


class IdentifiabilityWarning(UserWarning):
    """Every site has a single visit, so occupancy and detection are only
    separable through their covariates."""


@dataclass(frozen=True)
class Site:
    y: np.ndarray  # (T,)
    W: np.ndarray  # (T, 1 + n_w), leading intercept
    X: np.ndarray  # (1 + n_x,), leading intercept


@dataclass(frozen=True)
class OccupancyDataset:
    """Sites stored flat: visit rows are grouped by site in ``site_index`` order."""

    species: str
    site_ids: tuple[str, ...]
    X: np.ndarray  # (M, 1 + n_x)
    W: np.ndarray  # (N, 1 + n_w)
    y: np.ndarray  # (N,)
    site_index: np.ndarray  # (N,) site row of each visit

    @property
    def n_sites(self) -> int:
        return len(self.X)

    @property
    def n_visits(self) -> int:
        return len(self.y)

    def visits_per_site(self) -> np.ndarray:
        return np.bincount(self.site_index, minlength=self.n_sites)

    def site(self, i: int) -> Site:
        rows = self.site_index == i
        return Site(self.y[rows], self.W[rows], self.X[i])

    @classmethod
    def from_sites(cls, sites: Sequence[Site], species: str = "", site_ids=None) -> "OccupancyDataset":
        X = np.array([s.X for s in sites], dtype=float)
        W = np.vstack([s.W for s in sites])
        y = np.concatenate([np.asarray(s.y, dtype=float) for s in sites])
        idx = np.repeat(np.arange(len(sites)), [len(s.y) for s in sites])
        ids = tuple(site_ids) if site_ids is not None else tuple(str(i) for i in range(len(sites)))
        return cls(species, ids, X, W, y, idx)


def _with_intercept(a: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return np.column_stack([np.ones(len(a)), a])


def build_dataset(clustering: SiteClustering, cs: Sequence[Checklist], species: str) -> OccupancyDataset:
    """One site per site id; X is the mean of member occupancy features."""
    by_id = {c.id: c for c in cs}
    missing = [cid for cid in clustering.assignments if cid not in by_id]
    if missing:
        raise KeyError(f"clustering references unknown checklist ids, e.g. {missing[:3]}")
    sites = clustering.sites()
    if sites and species not in by_id[next(iter(clustering.assignments))].detections:
        raise KeyError(f"species code {species!r} not present in checklist detections")

    X, W, y, idx = [], [], [], []
    for i, members in enumerate(sites.values()):
        rows = [by_id[cid] for cid in members]
        try:
            y.extend(c.detections[species] for c in rows)
        except KeyError:
            raise KeyError(f"species code {species!r} not present in checklist detections") from None
        W.extend(c.detection_features for c in rows)
        X.append(np.mean([c.occupancy_features for c in rows], axis=0))
        idx.extend([i] * len(rows))
    return OccupancyDataset(
        species=species,
        site_ids=tuple(sites),
        X=_with_intercept(np.array(X)),
        W=_with_intercept(np.array(W)),
        y=np.array(y, dtype=float),
        site_index=np.array(idx, dtype=np.int64),
    )


def sigmoid(eta):
    eta = np.clip(eta, -ETA_CLIP, ETA_CLIP)
    return 1.0 / (1.0 + np.exp(-eta))


def _log_sigmoid(eta):
    return -np.logaddexp(0.0, -np.clip(eta, -ETA_CLIP, ETA_CLIP))


def _site_terms(beta, gamma, X, W, y, site_index):
    """Per-site log-likelihood and the pieces the gradient needs."""
    m = len(X)
    eta_x = X @ beta
    eta_w = W @ gamma
    log_det = np.bincount(
        site_index, weights=y * _log_sigmoid(eta_w) + (1.0 - y) * _log_sigmoid(-eta_w), minlength=m
    )
    log_present = _log_sigmoid(eta_x) + log_det
    detected = np.bincount(site_index, weights=y, minlength=m) > 0
    ll = np.where(detected, log_present, np.logaddexp(log_present, _log_sigmoid(-eta_x)))
    return ll, log_present, detected, eta_x, eta_w


def site_log_likelihood(beta, gamma, site: Site) -> float:
    """log[psi * prod_t p^y (1-p)^(1-y) + (1 - psi) * 1{no detections}]."""
    y = np.asarray(site.y, dtype=float)
    ll, *_ = _site_terms(
        np.asarray(beta, float), np.asarray(gamma, float), np.atleast_2d(site.X), np.atleast_2d(site.W),
        y, np.zeros(len(y), dtype=np.int64),
    )
    return float(ll[0])


def dataset_log_likelihood(beta, gamma, ds: OccupancyDataset) -> float:
    ll, *_ = _site_terms(np.asarray(beta, float), np.asarray(gamma, float), ds.X, ds.W, ds.y, ds.site_index)
    return float(ll.sum())


def log_likelihood_and_grad(beta, gamma, X, W, y, site_index):
    """Total log-likelihood and its gradient with respect to (beta, gamma)."""
    ll, log_present, detected, eta_x, eta_w = _site_terms(beta, gamma, X, W, y, site_index)
    # posterior P(Z=1 | y); exactly 1 where anything was detected
    r = np.where(detected, 1.0, np.exp(log_present - ll))
    psi = sigmoid(eta_x)
    p = sigmoid(eta_w)
    gx = (r - psi) * (np.abs(eta_x) < ETA_CLIP)
    gw = r[site_index] * (y - p) * (np.abs(eta_w) < ETA_CLIP)
    return float(ll.sum()), X.T @ gx, W.T @ gw


@dataclass
class FittedOccupancyModel:
    """Coefficients act on z-scored covariates; ``x_mean``/``x_std`` and
    ``w_mean``/``w_std`` hold the raw-unit scaling used at fit time."""

    beta: np.ndarray
    gamma: np.ndarray
    log_likelihood: float
    converged: bool
    n_sites: int
    n_visits: int
    x_mean: np.ndarray
    x_std: np.ndarray
    w_mean: np.ndarray
    w_std: np.ndarray
    grad_norm: float = float("nan")
    species: str = ""
    init_log_likelihoods: list[float] = field(default_factory=list)

    def raw_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients for unscaled, intercept-augmented covariates."""
        return _unscale(self.beta, self.x_mean, self.x_std), _unscale(self.gamma, self.w_mean, self.w_std)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FittedOccupancyModel":
        d = dict(d)
        for k in ("beta", "gamma", "x_mean", "x_std", "w_mean", "w_std"):
            d[k] = np.asarray(d[k], dtype=float)
        return cls(**d)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FittedOccupancyModel":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"model file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def _unscale(coef, mean, std):
    slopes = coef[1:] / std
    return np.concatenate([[coef[0] - np.sum(slopes * mean)], slopes])


def _scaling(a: np.ndarray):
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def _logit(q: float) -> float:
    q = min(max(q, 0.01), 0.99)
    return float(np.log(q / (1 - q)))


def _fd_hessian(grad, theta, h=1e-5):
    k = len(theta)
    H = np.empty((k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (grad(theta + e) - grad(theta - e)) / (2 * h)
    return 0.5 * (H + H.T)


def fit(
    ds: OccupancyDataset,
    restarts: int = 5,
    tol: float = 1e-8,
    seed: int = 0,
    maxiter: int = 2000,
) -> FittedOccupancyModel:
    """Maximum-likelihood fit by BFGS with analytic gradients.

    The objective is the mean per-site log-likelihood on z-scored covariates;
    ``converged`` means its gradient norm fell below ``tol``. A few Newton
    steps on a finite-difference Hessian of the analytic gradient polish the
    BFGS solution. The best of ``restarts`` seeded starts is returned.
    """
    if ds.n_sites < 1:
        raise DegenerateDataError("dataset has no sites")
    if np.all(ds.y == 0) or np.all(ds.y == 1):
        raise DegenerateDataError(
            f"species {ds.species!r}: labels are all {int(ds.y[0])}; occupancy is not estimable"
        )
    if np.all(ds.visits_per_site() == 1):
        warnings.warn(
            "all sites have a single visit; occupancy and detection are weakly identified",
            IdentifiabilityWarning,
            stacklevel=2,
        )

    x_mean, x_std = _scaling(ds.X[:, 1:])
    w_mean, w_std = _scaling(ds.W[:, 1:])
    X = _with_intercept((ds.X[:, 1:] - x_mean) / x_std)
    W = _with_intercept((ds.W[:, 1:] - w_mean) / w_std)
    y, idx = ds.y, ds.site_index
    kx = X.shape[1]
    m = ds.n_sites

    def negf(theta):
        ll, gb, gg = log_likelihood_and_grad(theta[:kx], theta[kx:], X, W, y, idx)
        return -ll / m, -np.concatenate([gb, gg]) / m

    def grad(theta):
        return negf(theta)[1]

    detected = np.bincount(idx, weights=y, minlength=m) > 0
    occ0 = _logit(detected.mean())
    det0 = _logit(y[detected[idx]].mean())

    rng = np.random.default_rng(seed)
    best, inits = None, []
    for _ in range(max(1, restarts)):
        theta0 = rng.uniform(-0.5, 0.5, size=kx + W.shape[1])
        theta0[0], theta0[kx] = occ0, det0
        f0 = negf(theta0)[0]
        inits.append(-f0 * m)
        with np.errstate(over="ignore", invalid="ignore"):
            res = minimize(negf, theta0, jac=True, method="BFGS", options={"gtol": tol, "maxiter": maxiter})
        theta, fval = res.x, res.fun
        if not np.isfinite(fval):
            raise OptimizationError(f"non-finite likelihood after BFGS ({res.message}); theta={theta}")
        g = grad(theta)
        for _ in range(20):
            if np.linalg.norm(g) < tol:
                break
            H = _fd_hessian(grad, theta)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            cand = theta - step
            fc, gc = negf(cand)
            if not np.isfinite(fc) or fc > fval + 1e-14:
                break
            theta, fval, g = cand, fc, gc
        if best is None or fval < best[1]:
            best = (theta, fval, np.linalg.norm(g))

    theta, fval, gnorm = best
    if not np.isfinite(fval) or not np.all(np.isfinite(theta)):
        raise OptimizationError(f"optimisation produced non-finite values: f={fval}, theta={theta}")
    return FittedOccupancyModel(
        beta=theta[:kx].copy(),
        gamma=theta[kx:].copy(),
        log_likelihood=float(-fval * m),
        converged=bool(gnorm < tol),
        n_sites=m,
        n_visits=ds.n_visits,
        x_mean=x_mean,
        x_std=x_std,
        w_mean=w_mean,
        w_std=w_std,
        grad_norm=float(gnorm),
        species=ds.species,
        init_log_likelihoods=[float(v) for v in inits],
    )


def _design(values, mean, std) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    single = a.ndim == 1
    return _with_intercept((np.atleast_2d(a) - mean) / std), single


def predict_psi(model: FittedOccupancyModel, x):
    """Occupancy probability for raw occupancy covariates (one row or many)."""
    D, single = _design(x, model.x_mean, model.x_std)
    out = sigmoid(D @ model.beta)
    return float(out[0]) if single else out


def predict_p(model: FittedOccupancyModel, w):
    """Detection probability for raw detection covariates."""
    D, single = _design(w, model.w_mean, model.w_std)
    out = sigmoid(D @ model.gamma)
    return float(out[0]) if single else out


def predict_observation_prob(model: FittedOccupancyModel, x, w):
    """P(detection on a single visit) = psi * p."""
    psi = predict_psi(model, x)
    p = predict_p(model, w)
    return psi * p
