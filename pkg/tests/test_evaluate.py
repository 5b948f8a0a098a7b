import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siteclust.errors import MetricUndefinedError, ParameterError
from siteclust.evaluate import (
    HexGrid,
    auc,
    auprc,
    checklist_cells,
    hex_assign,
    pct_improvement,
    run_benchmark,
    spatial_subsample,
)
from siteclust.geometry import PlanarPoint
from siteclust.ingest import DatasetSplit
from siteclust.methods import MethodSpec
from siteclust.simulate import SimulationSpec, simulate_dataset

from conftest import make_checklist

BETA = (0.0, 1.2, -0.8, 0.6, 0.0, 0.4)
GAMMA = (0.2, 0.7, 0.0, -0.5, 0.4, 0.0)


def auc_oracle(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def auprc_oracle(scores, labels):
    """Sweep every distinct threshold from high to low."""
    n_pos = sum(labels)
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        sel = [y for s, y in zip(scores, labels) if s >= t]
        recall = sum(sel) / n_pos
        total += (recall - prev_recall) * (sum(sel) / len(sel))
        prev_recall = recall
    return total


def sim_split(m=400, seed=0, visits=1, **kw):
    _, _, tr = simulate_dataset(SimulationSpec(m, BETA, GAMMA, visits_per_site=visits, seed=seed, **kw))
    _, _, te = simulate_dataset(SimulationSpec(m, BETA, GAMMA, visits_per_site=1, seed=seed + 1000, **kw))
    te = [replace(c, id="T" + c.id) for c in te]
    return DatasetSplit(tuple(tr), tuple(te), "train", "test")


# ------------------------------------------------------------------- hex

def test_hex_examples():
    g = HexGrid(5000.0)
    for q, r in [(0, 0), (3, -2), (-4, 7)]:
        x, y = g.center(q, r)
        assert hex_assign([PlanarPoint(x, y)], g) == [(q, r)]
    x, y = g.center(2, 1)
    pts = [PlanarPoint(x + 30, y - 40), PlanarPoint(x + 30 + 60, y - 40 + 80)]
    a, b = hex_assign(pts, g)
    assert a == b == (2, 1)
    with pytest.raises(ParameterError):
        HexGrid(0.0)


def test_hex_centres_are_spacing_apart():
    g = HexGrid(5000.0)
    c = np.array(g.center(0, 0))
    for q, r in [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]:
        assert np.hypot(*(np.array(g.center(q, r)) - c)) == pytest.approx(5000.0)


def test_hex_nearest_centre_brute_force(rng):
    g = HexGrid(5000.0)
    pts = rng.uniform(-40_000, 40_000, (200, 2))
    cells = g.cells(pts[:, 0], pts[:, 1])
    centres = {(q, r): g.center(q, r) for q in range(-20, 21) for r in range(-20, 21)}
    keys = list(centres)
    arr = np.array([centres[k] for k in keys])
    for p, cell in zip(pts, cells):
        d = np.hypot(*(arr - p).T)
        best = keys[int(np.argmin(d))]
        # ties on a cell boundary may go either way
        assert tuple(cell) == best or math.isclose(d.min(), np.hypot(*(np.array(centres[tuple(cell)]) - p)))


# ------------------------------------------------------------- subsample

def test_subsample_cell_examples():
    g = HexGrid(5000.0, (44.0, -123.0))
    cell = [make_checklist(i, detections={"AMRO": int(i < 3)}) for i in range(8)]
    assert len(spatial_subsample(cell, "AMRO", g, seed=1)) == 2
    cell = [make_checklist(i, detections={"AMRO": 0}) for i in range(2)]
    assert len(spatial_subsample(cell, "AMRO", g, seed=1)) == 1


def test_subsample_caps_and_distinct_draws():
    test = list(sim_split(m=800, seed=3, extent_m=60_000.0).test)
    g = HexGrid(5000.0, (min(c.latitude for c in test), min(c.longitude for c in test)))
    seen = set()
    for r in range(25):
        sub = spatial_subsample(test, "SIM", g, seed=[0, 0, r])
        cells = checklist_cells(sub, g)
        keys = [(int(a), int(b), c.detections["SIM"]) for (a, b), c in zip(cells, sub)]
        assert len(keys) == len(set(keys))
        seen.add(tuple(c.id for c in sub))
    assert len(seen) == 25


# --------------------------------------------------------------- metrics

def test_metric_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auprc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    n = 7
    assert auprc(np.arange(n, 0, -1.0), [0] * (n - 1) + [1]) == pytest.approx(1 / n)
    with pytest.raises(MetricUndefinedError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricUndefinedError):
        auprc([0.1, 0.2], [0, 0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 60), st.integers(0, 10**6), st.booleans())
def test_metrics_match_oracles(n, seed, coarse):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, 5, n).astype(float) if coarse else rng.random(n)
    assert auc(s, y) == pytest.approx(auc_oracle(s.tolist(), y.tolist()), abs=1e-12)
    assert auprc(s, y) == pytest.approx(auprc_oracle(s.tolist(), y.tolist()), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_metrics_invariant_to_monotone_maps(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 40)
    y[:2] = [0, 1]
    s = rng.integers(0, 8, 40).astype(float)
    t = np.exp(3 * s) + 0.5 * s
    assert auc(s, y) == auc(t, y)
    assert auprc(s, y) == auprc(t, y)


def test_pct_improvement_examples():
    assert pct_improvement(0.66, 0.60) == pytest.approx(10.0)
    assert pct_improvement(0.54, 0.60) == pytest.approx(-10.0)
    assert pct_improvement(0.71, 0.71) == 0.0
    with pytest.raises(ZeroDivisionError):
        pct_improvement(0.5, 0.0)


# ------------------------------------------------------------- benchmark

def test_benchmark_shape():
    split = sim_split(m=200, seed=1, visits=3)
    rep = run_benchmark(split, [MethodSpec("SVS"), MethodSpec("lat-long")], ["SIM"], repeats=2, seed=0, restarts=2)
    assert len(rep.values("SIM", "SVS")) == 2 and len(rep.values("SIM", "lat-long")) == 2
    assert len(rep.values("SIM", "SVS", "delta")) == 2
    assert rep.values("SIM", "lat-long", "delta") == [0.0, 0.0]
    assert all(0 <= v <= 1 for v in rep.values("SIM", "SVS") + rep.values("SIM", "SVS", "auprc"))


def test_benchmark_requires_reference():
    with pytest.raises(ParameterError):
        run_benchmark(sim_split(m=50), [MethodSpec("SVS")], ["SIM"], repeats=1)


def test_singleton_sites_make_methods_agree():
    split = sim_split(m=400, seed=5, visits=1)
    methods = [MethodSpec("lat-long"), MethodSpec("SVS"), MethodSpec("1-UL"), MethodSpec("rounded-4")]
    rep = run_benchmark(split, methods, ["SIM"], repeats=5, seed=2, restarts=2)
    means = [np.mean(rep.values("SIM", m.label)) for m in methods]
    assert max(means) - min(means) <= 0.02
    assert max(means) > 0.6


def test_benchmark_bit_identical_and_records_failures(tmp_path):
    split = sim_split(m=150, seed=7, visits=(1, 4))
    methods = [MethodSpec("lat-long"), MethodSpec("2to10"), MethodSpec("best-clustGeo",
               {"alphas": [0.25, 0.75], "lambdas": [60, 90]})]
    a = run_benchmark(split, methods, ["SIM"], repeats=3, seed=4, restarts=2)
    b = run_benchmark(split, methods, ["SIM"], repeats=3, seed=4, restarts=2)
    assert a.rows == b.rows and a.chosen == b.chosen
    assert a.chosen["SIM"].startswith("clustGeo-")
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    for k in pa:
        assert pa[k].read_bytes() == pb[k].read_bytes()
    # a species that is never detected cannot be fitted but the run completes
    dead = DatasetSplit(tuple(replace(c, detections={"SIM": c.detections["SIM"], "NONE": 0}) for c in split.train),
                        tuple(replace(c, detections={"SIM": c.detections["SIM"], "NONE": 0}) for c in split.test),
                        "train", "test")
    rep = run_benchmark(dead, [MethodSpec("lat-long")], ["NONE", "SIM"], repeats=1, seed=0, restarts=1)
    assert any(f[0] == "NONE" and "DegenerateDataError" in f[2] for f in rep.failures)
    assert all(math.isfinite(v) for v in rep.values("SIM", "lat-long"))
