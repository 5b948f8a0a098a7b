"""Method names, parameter parsing and dispatch to the clustering functions."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from . import cluster as C
from .errors import ParameterError
from .ingest import Checklist

METHODS = (
    "SVS",
    "1-UL",
    "lat-long",
    "2to10",
    "2to10-sameObs",
    "rounded-4",
    "1-kmSq",
    "clustGeo",
    "best-clustGeo",
    "BayesOptClustGeo",
    "DBSC",
)

# methods that may drop checklists
DISCARDING = {"1-UL", "2to10", "2to10-sameObs"}

_ALIASES = {
    "svs": "SVS",
    "1-ul": "1-UL",
    "1/ul": "1-UL",
    "oneperul": "1-UL",
    "lat-long": "lat-long",
    "latlong": "lat-long",
    "2to10": "2to10",
    "twototen": "2to10",
    "2to10-sameobs": "2to10-sameObs",
    "twototensameobs": "2to10-sameObs",
    "rounded-4": "rounded-4",
    "rounded4": "rounded-4",
    "1-kmsq": "1-kmSq",
    "onekmsq": "1-kmSq",
    "clustgeo": "clustGeo",
    "best-clustgeo": "best-clustGeo",
    "bestclustgeo": "best-clustGeo",
    "bayesoptclustgeo": "BayesOptClustGeo",
    "dbsc": "DBSC",
}

BEST_CLUSTGEO_ALPHAS = (0.25, 0.5, 0.75)
BEST_CLUSTGEO_LAMBDAS = (60.0, 70.0, 80.0, 90.0)


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.name == "clustGeo" and "alpha" in self.params:
            return f"clustGeo-{round(self.params['alpha'] * 100)}-{self.params['lambda']:g}"
        return self.name


def parse_method(text: str, params: dict | None = None) -> MethodSpec:
    """Parse a method name; ``clustGeo-25-80`` style names carry alpha (in
    percent) and lambda."""
    params = dict(params or {})
    m = re.fullmatch(r"(?i)clustgeo-(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)", text.strip())
    if m:
        params.setdefault("alpha", float(m.group(1)) / 100.0)
        params.setdefault("lambda", float(m.group(2)))
        return MethodSpec("clustGeo", params)
    name = _ALIASES.get(text.strip().lower())
    if name is None:
        raise ParameterError(f"unknown method {text!r}; valid names: {', '.join(METHODS)}")
    if name == "clustGeo" and not {"alpha", "lambda"} <= params.keys():
        raise ParameterError("clustGeo needs 'alpha' and 'lambda' parameters (or use clustGeo-<a%>-<lambda>)")
    return MethodSpec(name, params)


def best_clustgeo_variants(params: dict | None = None) -> list[MethodSpec]:
    params = params or {}
    alphas = params.get("alphas", BEST_CLUSTGEO_ALPHAS)
    lambdas = params.get("lambdas", BEST_CLUSTGEO_LAMBDAS)
    return [MethodSpec("clustGeo", {"alpha": float(a), "lambda": float(l)}) for a in alphas for l in lambdas]


def run_method(spec: MethodSpec, cs: Sequence[Checklist], seed: int, tune_result=None) -> C.SiteClustering:
    """Build the clustering for one concrete method.

    ``tune_result`` lets a caller reuse one BayesOptClustGeo search.
    """
    p = spec.params
    name = spec.name
    if name == "SVS":
        return C.cluster_trivial(cs, one_per_location=False)
    if name == "1-UL":
        return C.cluster_trivial(cs, one_per_location=True, seed=seed)
    if name == "lat-long":
        return C.cluster_exact_coord(cs, None)
    if name == "rounded-4":
        return C.cluster_exact_coord(cs, int(p.get("decimals", 4)))
    if name in ("2to10", "2to10-sameObs"):
        return C.cluster_bounded(
            cs, int(p.get("min_size", 2)), int(p.get("max_size", 10)), name == "2to10-sameObs", seed
        )
    if name == "1-kmSq":
        origin = tuple(p["origin"]) if "origin" in p else None
        return C.cluster_grid(cs, float(p.get("cell_size_m", 1000.0)), origin)
    if name == "clustGeo":
        return C.cluster_clustgeo(cs, float(p["alpha"]), float(p["lambda"]))
    if name == "DBSC":
        return C.cluster_dbsc(cs)
    if name == "BayesOptClustGeo":
        from .tune import bayes_opt_clustgeo

        if tune_result is None:
            tune_result = bayes_opt_clustgeo(
                cs,
                iterations=int(p.get("iterations", 30)),
                alpha_range=tuple(p.get("alpha_range", (0.01, 0.99))),
                lambda_range=tuple(p.get("lambda_range", (10.0, 90.0))),
                seed=seed,
            )
        sc = C.cluster_clustgeo(cs, tune_result.best_alpha, tune_result.best_lambda)
        return C.SiteClustering("BayesOptClustGeo", sc.assignments, sc.discarded, {**sc.params, "seed": seed})
    if name == "best-clustGeo":
        raise ParameterError("best-clustGeo is selected per species at evaluation time; use run_benchmark")
    raise ParameterError(f"unknown method {name!r}")
