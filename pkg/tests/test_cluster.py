import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import squareform

from siteclust.cluster import (
    SiteClustering,
    cluster_bounded,
    cluster_clustgeo,
    cluster_dbsc,
    cluster_exact_coord,
    cluster_grid,
    cluster_stats,
    cluster_trivial,
    clustgeo_k,
    clustgeo_labels,
    cut_linkage,
    mixed_dissimilarity,
    read_clustering,
    unique_locations,
    write_clustering,
)
from siteclust.errors import ParameterError
from siteclust.methods import DISCARDING, MethodSpec, parse_method, run_method

from conftest import make_checklist


def scatter(rng, n, n_coords=None, lat0=44.0, lon0=-123.0, spread=0.05):
    """Checklists on ``n_coords`` distinct coordinates with random features."""
    n_coords = n_coords or n
    coords = np.column_stack([lat0 + rng.uniform(0, spread, n_coords), lon0 + rng.uniform(0, spread, n_coords)])
    feats = rng.normal(size=(n_coords, 5))
    pick = rng.integers(n_coords, size=n)
    pick[:n_coords] = np.arange(n_coords)
    return [
        make_checklist(
            i, lat=float(coords[k, 0]), lon=float(coords[k, 1]),
            observer_id=f"o{rng.integers(3)}", occupancy_features=tuple(feats[k] + 0.01 * rng.normal(size=5)),
        )
        for i, k in enumerate(pick)
    ]


def partition_of(sc):
    return {frozenset(v) for v in sc.sites().values()}


def assert_partition(sc, cs):
    ids = [c.id for c in cs]
    assert set(sc.assignments) | set(sc.discarded) == set(ids)
    assert not set(sc.assignments) & set(sc.discarded)
    assert all(len(v) >= 1 for v in sc.sites().values())


ALL = [
    MethodSpec("SVS"), MethodSpec("1-UL"), MethodSpec("lat-long"), MethodSpec("2to10"),
    MethodSpec("2to10-sameObs"), MethodSpec("rounded-4"), MethodSpec("1-kmSq"),
    MethodSpec("clustGeo", {"alpha": 0.25, "lambda": 80.0}), MethodSpec("DBSC"),
    MethodSpec("BayesOptClustGeo", {"iterations": 2}),
]


# ---------------------------------------------------------------- examples

def test_exact_coord_example():
    cs = [make_checklist(0), make_checklist(1), make_checklist(2, lat=44.5)]
    sc = cluster_exact_coord(cs)
    assert sc.n_sites == 2 and sorted(sc.sizes()) == [1, 2] and sc.discarded == ()


def test_rounding_half_up():
    cs = [make_checklist(0, lat=44.00005, lon=-123.00005), make_checklist(1, lat=44.0001, lon=-123.0001)]
    assert cluster_exact_coord(cs, 4).n_sites == 1
    cs = [make_checklist(0, lat=44.00004999), make_checklist(1, lat=44.0001)]
    assert cluster_exact_coord(cs, 4).n_sites == 2


def test_svs_and_one_per_location():
    cs = [make_checklist(i, lat=44 + i) for i in range(5)]
    sc = cluster_trivial(cs)
    assert sc.n_sites == 5 and set(sc.sizes()) == {1}
    same = [make_checklist(i) for i in range(3)]
    sc = cluster_trivial(same, one_per_location=True, seed=3)
    assert sc.n_sites == 1 and len(sc.discarded) == 2


def test_one_per_location_choice_is_uniform():
    same = [make_checklist(i) for i in range(3)]
    kept = Counter(next(iter(cluster_trivial(same, True, seed=s).assignments)) for s in range(600))
    assert set(kept) == {"c0", "c1", "c2"}
    assert all(150 < v < 250 for v in kept.values())


def test_bounded_example():
    cs = [make_checklist(0, lat=40.0)]
    cs += [make_checklist(1 + i, lat=41.0) for i in range(3)]
    cs += [make_checklist(10 + i, lat=42.0) for i in range(12)]
    sc = cluster_bounded(cs, seed=1)
    assert sorted(sc.sizes()) == [3, 10]
    assert len(sc.discarded) == 1 + 2
    assert "c0" in sc.discarded


def test_bounded_same_observer_splits_groups():
    cs = [make_checklist(i, observer_id="a" if i < 3 else "b") for i in range(5)]
    assert sorted(cluster_bounded(cs, same_observer=True).sizes()) == [2, 3]
    cs = [make_checklist(i, observer_id=str(i)) for i in range(4)]
    sc = cluster_bounded(cs, same_observer=True)
    assert sc.n_sites == 0 and len(sc.discarded) == 4


def test_bounded_rejects_bad_bounds():
    with pytest.raises(ParameterError):
        cluster_bounded([make_checklist(0)], 3, 2)


def test_grid_examples():
    # 10 m apart vs 5 km apart
    d10 = 10 / 111194.93
    assert cluster_grid([make_checklist(0, lat=44.001), make_checklist(1, lat=44.001 + d10)]).n_sites == 1
    assert cluster_grid([make_checklist(0), make_checklist(1, lat=44.0 + 5000 / 111194.93)]).n_sites == 2
    with pytest.raises(ParameterError):
        cluster_grid([make_checklist(0)], 0)


def test_grid_cells_are_one_km(rng):
    cs = scatter(rng, 200)
    sc = cluster_grid(cs)
    from siteclust.geometry import project_local

    origin = tuple(sc.params["origin"])
    for members in sc.sites().values():
        pts = [next(c for c in cs if c.id == m) for m in members]
        xy = np.array([project_local(c.latitude, c.longitude, origin) for c in pts])
        cells = {tuple(v) for v in np.floor(xy / 1000).astype(int)}
        assert len(cells) == 1


def test_clustgeo_two_locations_lambda_100():
    cs = [make_checklist(0), make_checklist(1, lat=44.1, occupancy_features=(1.0, 2, 3, 4, 5))]
    assert cluster_clustgeo(cs, 0.5, 100).n_sites == 2


def test_clustgeo_k_rounding():
    assert clustgeo_k(80, 1314) == 1051
    assert clustgeo_k(60, 1314) == 788
    assert clustgeo_k(70, 1314) == 920
    assert clustgeo_k(90, 1314) == 1183
    assert clustgeo_k(50, 5) == 3  # 2.5 rounds up
    with pytest.raises(ParameterError):
        cluster_clustgeo([make_checklist(0), make_checklist(1, lat=45)], 0.5, 10)
    with pytest.raises(ParameterError):
        cluster_clustgeo([make_checklist(0)], 1.5, 50)


def two_blobs(rng, offset):
    lat1 = 44.0 + 10_000 / 111194.93
    cs = []
    for b, lat0 in enumerate((44.0, lat1)):
        for i in range(50):
            dlat, dlon = offset(rng, i)
            cs.append(make_checklist(100 * b + i, lat=lat0 + dlat, lon=-123.0 + dlon,
                                     occupancy_features=(1.0, 2.0, 3.0, 4.0, 5.0)))
    return cs


BLOBS = {frozenset(f"c{i}" for i in range(50)), frozenset(f"c{100 + i}" for i in range(50))}


@pytest.mark.parametrize("seed", range(5))
def test_dbsc_two_dense_blobs(seed):
    # jittered 7x8 lattice, ~60 m spacing
    cs = two_blobs(np.random.default_rng(seed),
                   lambda r, i: ((i // 7) * 5e-4 + r.uniform(0, 1e-4), (i % 7) * 7e-4 + r.uniform(0, 1e-4)))
    sc = cluster_dbsc(cs)
    assert sc.n_sites == 2 and partition_of(sc) == BLOBS


@pytest.mark.parametrize("seed", range(5))
def test_dbsc_never_joins_distant_blobs(seed):
    # gaussian tails may be peeled off as singletons, but no site spans both blobs
    cs = two_blobs(np.random.default_rng(seed), lambda r, i: tuple(r.normal(0, 1e-3, 2)))
    for members in partition_of(cluster_dbsc(cs)):
        assert any(members <= b for b in BLOBS)


def test_dbsc_single_point():
    sc = cluster_dbsc([make_checklist(0), make_checklist(1)])
    assert sc.n_sites == 1 and sc.discarded == ()


# ----------------------------------------------------------- ward oracle

def naive_ward(D, k):
    """O(n^3) agglomeration with the Lance-Williams Ward update."""
    n = len(D)
    D = D.astype(float).copy()
    np.fill_diagonal(D, np.inf)
    size = {i: 1 for i in range(n)}
    members = {i: {i} for i in range(n)}
    active = list(range(n))
    while len(active) > k:
        sub = D[np.ix_(active, active)]
        a, b = np.unravel_index(np.argmin(sub), sub.shape)
        i, j = active[a], active[b]
        dij = D[i, j]
        for m in active:
            if m in (i, j):
                continue
            s = size[i] + size[j] + size[m]
            D[i, m] = D[m, i] = np.sqrt(
                ((size[i] + size[m]) * D[i, m] ** 2 + (size[j] + size[m]) * D[j, m] ** 2 - size[m] * dij**2) / s
            )
        size[i] += size[j]
        members[i] |= members.pop(j)
        active.remove(j)
        D[j, :] = D[:, j] = np.inf
    return {frozenset(v) for v in members.values()}


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 14), st.floats(0, 1), st.sampled_from([10.0, 30.0, 50.0, 70.0, 100.0]), st.integers(0, 10**6))
def test_clustgeo_matches_naive_ward(n, alpha, lam, seed):
    rng = np.random.default_rng(seed)
    cs = scatter(rng, n)
    loc = unique_locations(cs)
    k = clustgeo_k(lam, len(loc.coords))
    if k < 1:
        return
    labels = clustgeo_labels(loc, alpha, lam)
    got = {frozenset(np.flatnonzero(labels == c)) for c in np.unique(labels)}
    assert got == naive_ward(squareform(mixed_dissimilarity(loc, alpha)), k)
    assert len(got) == k


def test_cut_linkage_counts(rng):
    from scipy.cluster.hierarchy import linkage

    Z = linkage(rng.normal(size=(12, 2)), "ward")
    for k in range(1, 13):
        assert len(np.unique(cut_linkage(Z, 12, k))) == k


# -------------------------------------------------------------- invariants

@settings(max_examples=10, deadline=None)
@given(st.integers(3, 40), st.integers(0, 10**6))
def test_partition_and_exclusion_for_all_methods(n, seed):
    rng = np.random.default_rng(seed)
    cs = scatter(rng, n, n_coords=max(2, n // 2))
    for spec in ALL:
        if spec.name == "clustGeo" and clustgeo_k(80, len({c.coord for c in cs})) < 1:
            continue
        sc = run_method(spec, cs, seed=7)
        assert_partition(sc, cs)
        if spec.name not in DISCARDING:
            assert sc.discarded == ()


def test_determinism_all_methods(rng):
    cs = scatter(rng, 60, n_coords=30)
    for spec in ALL:
        assert run_method(spec, cs, seed=5) == run_method(spec, cs, seed=5)


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 50), st.integers(0, 10**6))
def test_latlong_refines_coordinate_methods(n, seed):
    rng = np.random.default_rng(seed)
    cs = scatter(rng, n, n_coords=max(3, n // 3))
    ll = cluster_exact_coord(cs).assignments
    for sc in (cluster_grid(cs), cluster_clustgeo(cs, 0.4, 60), cluster_dbsc(cs), cluster_exact_coord(cs, 4)):
        seen = {}
        for cid, site in ll.items():
            assert seen.setdefault(site, sc.assignments[cid]) == sc.assignments[cid]


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 40), st.sampled_from([10.0, 40.0, 62.1339, 80.0, 95.0]), st.integers(0, 10**6))
def test_clustgeo_site_count(n, lam, seed):
    cs = scatter(np.random.default_rng(seed), n, n_coords=max(2, n // 2))
    u = len({c.coord for c in cs})
    k = clustgeo_k(lam, u)
    if k < 1:
        with pytest.raises(ParameterError):
            cluster_clustgeo(cs, 0.5, lam)
    else:
        assert cluster_clustgeo(cs, 0.5, lam).n_sites == k == int(np.floor(lam / 100 * u + 0.5))


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 30), st.integers(0, 10**6))
def test_clustgeo_alpha_extremes_ignore_other_part(n, seed):
    rng = np.random.default_rng(seed)
    cs = scatter(rng, n)
    perm = rng.permutation(5)
    swapped = [make_checklist(i, lat=c.latitude, lon=c.longitude,
                              occupancy_features=tuple(np.array(c.occupancy_features)[perm]))
               for i, c in enumerate(cs)]
    assert partition_of(cluster_clustgeo(cs, 1.0, 50)) == partition_of(cluster_clustgeo(swapped, 1.0, 50))

    # alpha = 0: moving coordinates (keeping them distinct) changes nothing
    moved = [make_checklist(i, lat=c.latitude + 0.3 * (i % 3), lon=c.longitude - 0.01 * i,
                            occupancy_features=c.occupancy_features) for i, c in enumerate(cs)]
    if len({c.coord for c in moved}) == len(moved):
        assert partition_of(cluster_clustgeo(cs, 0.0, 50)) == partition_of(cluster_clustgeo(moved, 0.0, 50))


# -------------------------------------------------------------------- io

def test_write_read_round_trip(tmp_path, rng):
    cs = scatter(rng, 40, n_coords=10)
    sc = cluster_bounded(cs, seed=2)
    p = tmp_path / "c.csv"
    write_clustering(p, sc, {"seed": 2})
    back = read_clustering(p)
    assert back.assignments == sc.assignments and back.discarded == sc.discarded and back.method == "2to10"
    meta = json.loads((tmp_path / "c.csv.meta.json").read_text())
    assert meta["seed"] == 2 and meta["n_clusters"] == sc.n_sites


def test_stats():
    sc = SiteClustering("x", {"a": "0", "b": "0", "c": "1"})
    st_ = cluster_stats(sc)
    assert st_["n_points"] == 3 and st_["n_clusters"] == 2 and st_["max_size"] == 2
    assert st_["std_size"] == pytest.approx(np.std([2, 1], ddof=1))


def test_parse_method():
    assert parse_method("clustGeo-25-80").params == {"alpha": 0.25, "lambda": 80.0}
    assert parse_method("clustGeo-25-80").label == "clustGeo-25-80"
    assert parse_method("1/UL").name == "1-UL"
    with pytest.raises(ParameterError, match="valid names"):
        parse_method("kmeans")
    with pytest.raises(ParameterError):
        run_method(MethodSpec("best-clustGeo"), [make_checklist(0)], 0)
