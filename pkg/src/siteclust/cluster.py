"""The site-clustering approaches.

Every function takes a sequence of checklists and returns a
:class:`SiteClustering`. Site ids are assigned in order of first appearance
in the input, so identical inputs give identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Hashable, Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist

from .errors import ParameterError
from .geometry import delaunay, project_local
from .ingest import Checklist


@dataclass(frozen=True)
class SiteClustering:
    method: str
    assignments: dict[str, str]
    discarded: tuple[str, ...] = ()
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def n_sites(self) -> int:
        return len(set(self.assignments.values()))

    def sites(self) -> dict[str, list[str]]:
        """site id -> member checklist ids, in assignment order."""
        out: dict[str, list[str]] = {}
        for cid, sid in self.assignments.items():
            out.setdefault(sid, []).append(cid)
        return out

    def sizes(self) -> np.ndarray:
        return np.array([len(v) for v in self.sites().values()], dtype=int)


def _from_keys(method, cs, keys, params, keep=None) -> SiteClustering:
    ids: dict[Hashable, str] = {}
    assignments, discarded = {}, []
    for i, (c, k) in enumerate(zip(cs, keys)):
        if keep is not None and not keep[i]:
            discarded.append(c.id)
            continue
        if k not in ids:
            ids[k] = str(len(ids))
        assignments[c.id] = ids[k]
    return SiteClustering(method, assignments, tuple(discarded), dict(params))


def _round_half_up(v: float, decimals: int) -> Decimal:
    return Decimal(repr(v)).quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)


def cluster_exact_coord(cs: Sequence[Checklist], decimals: int | None = None) -> SiteClustering:
    """lat-long (``decimals=None``) and rounded-N sites.

    Rounding is half-up (away from zero on ties) on the shortest decimal
    string of each coordinate.
    """
    if decimals is None:
        keys = [c.coord for c in cs]
        return _from_keys("lat-long", cs, keys, {})
    keys = [(_round_half_up(c.latitude, decimals), _round_half_up(c.longitude, decimals)) for c in cs]
    return _from_keys(f"rounded-{decimals}", cs, keys, {"decimals": decimals})


def _groups(keys: Iterable[Hashable]) -> dict[Hashable, list[int]]:
    out: dict[Hashable, list[int]] = {}
    for i, k in enumerate(keys):
        out.setdefault(k, []).append(i)
    return out


def cluster_trivial(cs: Sequence[Checklist], one_per_location: bool = False, seed: int = 0) -> SiteClustering:
    """SVS (every checklist a site) or 1-UL (one random checklist per coordinate)."""
    if not one_per_location:
        return _from_keys("SVS", cs, [c.id for c in cs], {})
    rng = np.random.default_rng(seed)
    keep = np.zeros(len(cs), dtype=bool)
    for members in _groups(c.coord for c in cs).values():
        keep[members[rng.integers(len(members))]] = True
    return _from_keys("1-UL", cs, [c.coord for c in cs], {"seed": seed}, keep)


def cluster_bounded(
    cs: Sequence[Checklist],
    min_size: int = 2,
    max_size: int = 10,
    same_observer: bool = False,
    seed: int = 0,
) -> SiteClustering:
    """2to10 / 2to10-sameObs: identical-coordinate groups with bounded size.

    Groups below ``min_size`` are dropped; groups above ``max_size`` keep a
    seeded uniform subsample of ``max_size`` members.
    """
    if not 1 <= min_size <= max_size:
        raise ParameterError(f"need 1 <= min_size <= max_size, got {min_size}, {max_size}")
    if same_observer:
        keys = [(c.latitude, c.longitude, c.observer_id) for c in cs]
    else:
        keys = [c.coord for c in cs]
    rng = np.random.default_rng(seed)
    keep = np.zeros(len(cs), dtype=bool)
    for members in _groups(keys).values():
        if len(members) < min_size:
            continue
        if len(members) > max_size:
            chosen = rng.choice(len(members), size=max_size, replace=False)
            members = [members[j] for j in sorted(chosen)]
        keep[members] = True
    name = "2to10-sameObs" if same_observer else "2to10"
    params = {"min_size": min_size, "max_size": max_size, "seed": seed}
    return _from_keys(name, cs, keys, params, keep)


def data_origin(cs: Sequence[Checklist]) -> tuple[float, float]:
    """South-west corner of the bounding box of the checklists."""
    return (min(c.latitude for c in cs), min(c.longitude for c in cs))


def cluster_grid(
    cs: Sequence[Checklist], cell_size_m: float = 1000.0, origin: tuple[float, float] | None = None
) -> SiteClustering:
    """Square grid cells on the local projection (1-kmSq by default)."""
    if cell_size_m <= 0:
        raise ParameterError("cell_size_m must be positive")
    if origin is None:
        origin = data_origin(cs)
    x, y = project_local([c.latitude for c in cs], [c.longitude for c in cs], origin)
    ix = np.floor(np.atleast_1d(x) / cell_size_m).astype(np.int64)
    iy = np.floor(np.atleast_1d(y) / cell_size_m).astype(np.int64)
    keys = list(zip(ix.tolist(), iy.tolist()))
    name = "1-kmSq" if cell_size_m == 1000.0 else f"grid-{cell_size_m:g}m"
    return _from_keys(name, cs, keys, {"cell_size_m": cell_size_m, "origin": list(origin)})


@dataclass(frozen=True)
class UniqueLocations:
    """Unique coordinates with projected positions and z-scored mean features."""

    coords: np.ndarray  # (n, 2) lat, lon; lexicographically sorted
    xy: np.ndarray  # (n, 2) metres
    features: np.ndarray  # (n, f) z-scored
    index_of: np.ndarray  # checklist position -> location row


def zscore(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    sd = a.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (a - a.mean(axis=0)) / sd


def unique_locations(cs: Sequence[Checklist], origin: tuple[float, float] | None = None) -> UniqueLocations:
    coords = np.array([c.coord for c in cs], dtype=float).reshape(-1, 2)
    uniq, inverse = np.unique(coords, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    feats = np.array([c.occupancy_features for c in cs], dtype=float)
    sums = np.zeros((len(uniq), feats.shape[1]))
    np.add.at(sums, inverse, feats)
    means = sums / np.bincount(inverse, minlength=len(uniq))[:, None]
    if origin is None:
        origin = data_origin(cs)
    x, y = project_local(uniq[:, 0], uniq[:, 1], origin)
    return UniqueLocations(uniq, np.column_stack([x, y]), zscore(means), inverse)


def _max_normalized(d: np.ndarray) -> np.ndarray:
    m = d.max() if d.size else 0.0
    return d / m if m > 0 else d


def dissimilarity_parts(loc: UniqueLocations) -> tuple[np.ndarray, np.ndarray]:
    """Condensed geographic and environmental distances, each max-normalised."""
    return _max_normalized(pdist(loc.xy)), _max_normalized(pdist(loc.features))


def mixed_dissimilarity(loc: UniqueLocations, alpha: float, parts=None) -> np.ndarray:
    """Condensed alpha*geo + (1-alpha)*env matrix."""
    d_geo, d_env = parts if parts is not None else dissimilarity_parts(loc)
    return alpha * d_geo + (1.0 - alpha) * d_env


def cut_linkage(Z: np.ndarray, n: int, k: int) -> np.ndarray:
    """Labels after applying the first ``n - k`` merges of a linkage matrix."""
    parent = np.arange(2 * n - 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for step in range(n - k):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = np.array([find(i) for i in range(n)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels.reshape(-1)


def clustgeo_k(lambda_pct: float, n_unique: int) -> int:
    # half-up, not banker's rounding
    return int(Decimal(repr(lambda_pct / 100.0 * n_unique)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def clustgeo_labels(loc: UniqueLocations, alpha: float, lambda_pct: float, parts=None) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
    if not 0.0 < lambda_pct <= 100.0:
        raise ParameterError(f"lambda must be in (0, 100], got {lambda_pct}")
    n = len(loc.coords)
    k = clustgeo_k(lambda_pct, n)
    if k < 1 or k > n:
        raise ParameterError(f"cluster count {k} outside [1, {n}] for lambda={lambda_pct}")
    if n == 1:
        return np.zeros(1, dtype=int)
    Z = linkage(mixed_dissimilarity(loc, alpha, parts), method="ward")
    return cut_linkage(Z, n, k)


def cluster_clustgeo(
    cs: Sequence[Checklist], alpha: float, lambda_pct: float, origin: tuple[float, float] | None = None
) -> SiteClustering:
    """Ward agglomeration of unique locations on a geo/environment mix.

    The tree is cut at ``round(lambda_pct / 100 * n_unique)`` clusters and
    every checklist inherits the cluster of its coordinate.
    """
    loc = unique_locations(cs, origin)
    labels = clustgeo_labels(loc, alpha, lambda_pct)
    keys = labels[loc.index_of].tolist()
    name = f"clustGeo-{round(alpha * 100)}-{lambda_pct:g}"
    return _from_keys(name, cs, keys, {"alpha": alpha, "lambda": lambda_pct})


def _components(n: int, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 0:
        return np.arange(n)
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return connected_components(g, directed=False)[1]


def _long_edge_mask(n: int, edges: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """True for edges longer than mean + (mean / local_mean(p)) * std at either end."""
    if len(edges) == 0:
        return np.zeros(0, dtype=bool)
    mean, std = lengths.mean(), lengths.std()
    tot = np.bincount(edges.ravel(), weights=np.repeat(lengths, 2), minlength=n)
    deg = np.bincount(edges.ravel(), minlength=n)
    local = np.divide(tot, deg, out=np.full(n, np.inf), where=deg > 0)
    cut = mean + (mean / local) * std
    return (lengths > cut[edges[:, 0]]) | (lengths > cut[edges[:, 1]])


def dbsc_labels(loc: UniqueLocations) -> np.ndarray:
    n = len(loc.coords)
    if n == 1:
        return np.zeros(1, dtype=int)
    g = delaunay(loc.xy)
    # loc.coords is lexsorted and distinct, but projection can still reorder;
    # map triangulation vertices back to location rows
    order = np.empty(n, dtype=np.int64)
    order[g.vertex_of] = np.arange(n)
    edges = np.sort(order[g.edges], axis=1)
    lengths = g.lengths

    keep = ~_long_edge_mask(n, edges, lengths)
    edges, lengths = edges[keep], lengths[keep]

    comp = _components(n, edges)
    keep = np.ones(len(edges), dtype=bool)
    edge_comp = comp[edges[:, 0]]
    for c in np.unique(edge_comp):
        sel = np.flatnonzero(edge_comp == c)
        keep[sel] = ~_long_edge_mask(n, edges[sel], lengths[sel])
    edges = edges[keep]

    partition = _components(n, edges)
    fdist = np.linalg.norm(loc.features[edges[:, 0]] - loc.features[edges[:, 1]], axis=1)
    keep = np.zeros(len(edges), dtype=bool)
    edge_part = partition[edges[:, 0]]
    for c in np.unique(edge_part):
        sel = np.flatnonzero(edge_part == c)
        d = fdist[sel]
        keep[sel] = d <= d.mean() + d.std()
    return _components(n, edges[keep])


def cluster_dbsc(cs: Sequence[Checklist], origin: tuple[float, float] | None = None) -> SiteClustering:
    """Two-phase Delaunay clustering: long-edge removal, then feature merging."""
    loc = unique_locations(cs, origin)
    labels = dbsc_labels(loc)
    return _from_keys("DBSC", cs, labels[loc.index_of].tolist(), {})


def cluster_stats(sc: SiteClustering) -> dict[str, float]:
    """Descriptive statistics of site sizes (sample std, ddof=1)."""
    sizes = sc.sizes()
    if len(sizes) == 0:
        return {"n_points": 0, "n_clusters": 0}
    return {
        "n_points": int(sizes.sum()),
        "n_clusters": int(len(sizes)),
        "min_size": int(sizes.min()),
        "max_size": int(sizes.max()),
        "mean_size": float(sizes.mean()),
        "std_size": float(sizes.std(ddof=1)) if len(sizes) > 1 else 0.0,
        "pct_single_visit": float(100.0 * np.mean(sizes == 1)),
    }


def write_clustering(path: str | Path, sc: SiteClustering, extra_meta: dict | None = None) -> None:
    """Two-column table (checklist_id, site_id; empty for discarded) plus a
    ``.meta.json`` sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("checklist_id,site_id\n")
        for cid, sid in sc.assignments.items():
            fh.write(f"{cid},{sid}\n")
        for cid in sc.discarded:
            fh.write(f"{cid},\n")
    meta = {"method": sc.method, "params": sc.params, **cluster_stats(sc), "n_discarded": len(sc.discarded)}
    if extra_meta:
        meta.update(extra_meta)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_clustering(path: str | Path) -> SiteClustering:
    path = Path(path)
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    assignments, discarded = {}, []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "checklist_id,site_id":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            cid, sid = line.rstrip("\n").split(",")
            if sid:
                assignments[cid] = sid
            else:
                discarded.append(cid)
    return SiteClustering(meta.get("method", "unknown"), assignments, tuple(discarded), meta.get("params", {}))
