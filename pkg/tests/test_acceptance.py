"""End-to-end acceptance checks; each prints a verdict line.

One test per criterion, covering metric oracles, analytic identities,
tessellation conservation, contextualization, the forest learner, fusion
arithmetic, scoring, the synthetic-city run and determinism.
"""

import json
import math
import shutil
import sys
import time

import numpy as np
import pytest
from click.testing import CliRunner
from shapely.geometry import Point, box

import morpholcz.forest as forest
from morpholcz.catalog import N_CONTEXTUAL
from morpholcz.cli import main
from morpholcz.context import build_contiguity, contextualize
from morpholcz.evaluation import ALL_CLASSES, scores
from morpholcz.fusion import Raster, make_patches, patch_stats, zonal_s3
from morpholcz.gridraster import GridGeometry
from morpholcz.metrics_shape import shape_dimension_metrics
from morpholcz.tessellation import tessellate

import oracles as orc
from metric_suite import run_metric_oracle_suite
from test_tessellation import random_scene


def verdict(capsys, name: str, ok: bool, detail: str = "") -> None:
    tail = f" ({detail})" if detail else ""
    with capsys.disabled():
        print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}{tail}")
        sys.stdout.flush()


def test_metric_oracle_suite(capsys):
    t0 = time.perf_counter()
    report = run_metric_oracle_suite()
    elapsed = time.perf_counter() - t0
    raycast = ("street_width", "street_width_dev", "street_openness")
    bad = {n: e for n, e in report.items()
           if e > (1e-3 if n in raycast else 1e-6)}
    ok = len(report) == 107 and not bad and elapsed < 30.0
    verdict(capsys, "metric-oracle-suite", ok,
            f"{len(report)} columns, {len(bad)} failing, {elapsed:.1f}s")
    assert ok, bad


def test_analytic_shape_identities(capsys):
    square = shape_dimension_metrics([box(0, 0, 9, 9)], "bldg")
    exact = all(
        abs(square[f"bldg_{name}"][0] - 1.0) <= 1e-9
        for name in ("square_compactness", "eri", "rectangularity",
                     "elongation", "fractal_dimension")
    )
    circle = shape_dimension_metrics([Point(0, 0).buffer(10, quad_segs=64)], "bldg")
    round_ok = circle["bldg_circular_compactness"][0] >= 0.999
    ok = exact and round_ok
    verdict(capsys, "analytic-shape-identities", ok)
    assert ok


def test_tessellation_conservation(capsys):
    rng = np.random.default_rng(42)
    worst = 0.0
    bijections = 0
    for _ in range(50):
        enclosure, buildings = random_scene(rng)
        cells = tessellate(buildings, [enclosure])
        if sorted(c.building_id for c in cells) == [b.id for b in buildings]:
            bijections += 1
        total = sum(c.polygon.area for c in cells)
        worst = max(worst, abs(total - enclosure.polygon.area) / enclosure.polygon.area)
    ok = worst <= 1e-3 and bijections == 50
    verdict(capsys, "tessellation-conservation", ok,
            f"max area error {worst:.2e}, bijection {bijections}/50")
    assert ok


def test_contextualization(capsys):
    graph = build_contiguity([
        box(i * 10, j * 10, i * 10 + 10, j * 10 + 10)
        for j in range(3) for i in range(3)
    ])
    rng = np.random.default_rng(1)
    ctx = contextualize(rng.normal(size=(9, 107)), graph)
    width_ok = ctx.shape[1] == N_CONTEXTUAL == 321
    order_ok = all(
        (np.diff(ctx[:, 3 * m:3 * m + 3], axis=1) >= -1e-12).all() for m in range(107)
    )
    const_ok = np.allclose(contextualize(np.full((9, 2), 5.0), graph), 5.0)
    nine = contextualize(np.arange(1.0, 10.0).reshape(9, 1), graph, steps=1)
    interp_ok = np.allclose(nine[4], [3.0, 5.0, 7.0])
    ok = width_ok and order_ok and const_ok and interp_ok
    verdict(capsys, "contextualization", ok, f"width {ctx.shape[1]}")
    assert ok


def test_forest_correctness(monkeypatch, capsys):
    rng = np.random.default_rng(7)
    oracle_ok = True
    for _ in range(25):
        n, d, depth = int(rng.integers(4, 13)), int(rng.integers(1, 4)), int(rng.integers(1, 3))
        X = np.round(rng.normal(size=(n, d)), 2)
        y = rng.integers(0, 3, size=n)
        if len(np.unique(y)) < 2:
            y[0], y[1] = 0, 1
        classes = np.unique(y)
        y_idx = np.searchsorted(classes, y)
        model = forest.train(X, y, n_trees=1, max_depth=depth, max_features=None,
                             bootstrap=False, seed=0)
        root = orc.exhaustive_tree(X, y_idx, np.ones(n), len(classes), depth)
        for i in range(n):
            want = orc.tree_predict_dist(root, X[i])
            got = model.trees[0].predict_dist(X[i:i + 1])[0]
            if not np.allclose(got, want, atol=1e-9):
                oracle_ok = False

    Xb = np.vstack([rng.normal(0, 1, (40, 4)), rng.normal(3, 1, (40, 4))])
    yb = np.repeat([0, 1], 40)
    ranked = forest.importance(forest.train(Xb, yb, n_trees=10, max_depth=6, seed=0))
    imp_ok = math.isclose(sum(v for _, v in ranked), 1.0, abs_tol=1e-9)

    class Fake:
        def __init__(self, tr, te):
            self.tr, self.te, self.calls = tr, te, 0

        def predict(self, X):
            self.calls += 1
            oa = self.tr if self.calls == 1 else self.te
            out = np.zeros(X.shape[0], dtype=int)
            out[int(round(oa * X.shape[0])):] = 1
            return out

    def run_tuning(table):
        def fake_train(X, y, weighting="uniform", n_trees=100, max_depth=None,
                       max_features=None, seed=0, bootstrap=True):
            return Fake(*table[max_depth])

        monkeypatch.setattr(forest, "train", fake_train)
        X = np.zeros((100, 4))
        y = np.zeros(100, dtype=int)
        return forest.tune(X, y, X, y, depth_grid=(4, 8), feat_grid=("sqrt",))

    _, compliant = run_tuning({4: (0.99, 0.92), 8: (0.93, 0.90)})
    _, fallback = run_tuning({4: (1.0, 0.80), 8: (1.0, 0.93)})
    tune_ok = (
        compliant.rule == "gap<5%" and compliant.chosen["max_depth"] == 8
        and fallback.rule == "min-gap fallback" and fallback.chosen["max_depth"] == 8
    )
    ok = oracle_ok and imp_ok and tune_ok
    verdict(capsys, "forest-correctness", ok)
    assert ok


def test_fusion_arithmetic(capsys):
    rng = np.random.default_rng(3)
    grid = GridGeometry(origin_x=0, origin_y=640, pixel_size=10.0, width=64, height=64)
    stack = Raster(geometry=grid, data=np.zeros((30, 64, 64)),
                   band_names=[f"b{i}" for i in range(30)])
    # float64 data keeps the 1e-9 comparison against the float64 loop honest
    stack.data = rng.normal(size=(30, 64, 64))
    stack.data[rng.random(stack.data.shape) < 0.1] = np.nan
    # zonal tiling needs divisibility; use a 60x60 crop
    stack60 = Raster(geometry=GridGeometry(origin_x=0, origin_y=600, pixel_size=10.0,
                                           width=60, height=60),
                     data=np.zeros((30, 60, 60)), band_names=stack.band_names)
    stack60.data = stack.data[:, :60, :60]
    coarse = GridGeometry(origin_x=0, origin_y=600, pixel_size=100.0, width=6, height=6)
    s3 = zonal_s3(stack60, coarse)
    want_rows = orc.zonal_loop(stack60.data, 10)
    want = np.array([want_rows[k] for k in s3.keys])
    s3_ok = len(s3.names) == 90 and np.allclose(s3.values, want, atol=1e-9, equal_nan=True)

    morpho = Raster(geometry=grid, data=np.zeros((20, 64, 64)),
                    band_names=[f"m{i}" for i in range(20)])
    morpho.data = rng.normal(size=(20, 64, 64))
    idx = make_patches(grid)
    stats = patch_stats(morpho, idx)
    want_rows = orc.patch_stats_loop(morpho.data, {p.id: (p.row0, p.col0) for p in idx.patches},
                                     idx.size_px)
    want = np.array([want_rows[k] for k in stats.keys])
    s4_ok = len(stats.names) == 100 and np.allclose(stats.values, want, atol=1e-9,
                                                    equal_nan=True)

    counts_ok = True
    for _ in range(20):
        ext_x = 10 * int(rng.integers(32, 100))
        ext_y = 10 * int(rng.integers(32, 100))
        g = GridGeometry(origin_x=0, origin_y=ext_y, pixel_size=10.0,
                         width=ext_x // 10, height=ext_y // 10)
        pidx = make_patches(g)
        nx = math.floor((ext_x - 320) / 100) + 1
        ny = math.floor((ext_y - 320) / 100) + 1
        if len(pidx.patches) + pidx.dropped != nx * ny:
            counts_ok = False
    ok = s3_ok and s4_ok and counts_ok
    verdict(capsys, "fusion-arithmetic", ok,
            f"s3 cols {len(s3.names)}, s4 cols {len(stats.names)}")
    assert ok


def test_scoring_oracle(capsys):
    rng = np.random.default_rng(11)
    ok = True
    for _ in range(10):
        classes = rng.choice(ALL_CLASSES, size=int(rng.integers(2, 6)), replace=False)
        n = int(rng.integers(20, 80))
        y_true = rng.choice(classes, size=n)
        y_pred = rng.choice(classes, size=n)
        fs = scores(y_true, y_pred)
        oa, f1, _, _, weighted = orc.hand_scores(list(y_true), list(y_pred),
                                                 list(ALL_CLASSES))
        urban = weighted(list(range(1, 11)))
        natural = weighted(list(range(11, 18)))
        if fs.oa != oa or fs.f1_weighted != weighted(list(ALL_CLASSES)):
            ok = False
        for got, want in ((fs.f1_urban, urban), (fs.f1_natural, natural)):
            if not (got == want or (math.isnan(got) and math.isnan(want))):
                ok = False
        perm = rng.permutation(n)
        fp = scores(y_true[perm], y_pred[perm])
        if fp.oa != fs.oa or fp.f1_weighted != fs.f1_weighted:
            ok = False
    verdict(capsys, "scoring-oracle", ok)
    assert ok


def test_synthetic_city_end_to_end(pipeline_run, capsys):
    report = json.loads((pipeline_run["out"] / "s1" / "report.json").read_text())
    oa = report["averaged"]["oa"]
    confusion = np.asarray(report["confusion"])

    def row(c):
        return confusion[ALL_CLASSES.index(c)]

    compact, open_, sparse = row(3), row(6), row(9)
    i3, i6 = ALL_CLASSES.index(3), ALL_CLASSES.index(6)
    compact_vs_open = (compact[i6] / compact.sum() <= 0.10
                       and open_[i3] / open_.sum() <= 0.10)
    sparse_to_open = sparse[i6] / sparse.sum()
    elapsed = pipeline_run["seconds"]
    ok = (oa >= 0.90 and compact_vs_open and sparse_to_open >= 0.20
          and elapsed < 300.0)
    verdict(
        capsys, "synthetic-city-end-to-end", ok,
        f"OA {oa:.4f}, sparse->open {sparse_to_open:.0%}, {elapsed:.0f}s",
    )
    assert ok


def test_determinism(pipeline_run, capsys):
    site = pipeline_run["site"]
    out = pipeline_run["out"]
    watched = [
        "s1/report.json", "s1/top20.json", "s1/predictions.csv",
        "s3/report.json", "s3/features.csv",
        "folds/labels.csv", "metrics/primary.csv", "context/context.csv",
        "maps/s1_cells.geojson", "maps/s1_grid.tif", "maps/s1_grid.png",
        "maps/s1_cells_legend.json",
    ]
    first = {rel: (out / rel).read_bytes() for rel in watched}
    shutil.rmtree(out)
    result = CliRunner().invoke(main, ["run", "--config", str(site / "site.ini")])
    assert result.exit_code == 0, result.output
    differing = [rel for rel in watched if (out / rel).read_bytes() != first[rel]]
    ok = not differing
    verdict(capsys, "determinism", ok, f"{len(watched)} artifacts compared")
    assert ok, differing
