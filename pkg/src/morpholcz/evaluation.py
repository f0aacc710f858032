"""Reference preparation, stratified folds, scheme scoring and map output."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely import STRtree
from shapely.geometry import LineString, Polygon, box
from shapely.ops import split as shapely_split

from .gridraster import GridGeometry, Raster, write_geotiff
from .metrics_shape import minimum_rotated_rectangle_sides
from .types import Building, EtcCell
from .vecio import FeatureCollection, write_vector

logger = logging.getLogger(__name__)

# LCZ classes: 1..10 urban, 11..17 = A..G natural
URBAN_CLASSES = tuple(range(1, 11))
NATURAL_CLASSES = tuple(range(11, 18))
ALL_CLASSES = URBAN_CLASSES + NATURAL_CLASSES
_NATURAL_NAMES = "ABCDEFG"

LCZ_COLORS = {
    1: "#8c0000", 2: "#d10000", 3: "#ff0000", 4: "#bf4d00", 5: "#ff6600",
    6: "#ff9955", 7: "#faee05", 8: "#bcbcbc", 9: "#ffccaa", 10: "#555555",
    11: "#006a00", 12: "#00aa00", 13: "#648525", 14: "#b9db79", 15: "#000000",
    16: "#fbf7ae", 17: "#6a6aff",
}


def class_name(class_id: int) -> str:
    if class_id in URBAN_CLASSES:
        return str(class_id)
    return _NATURAL_NAMES[class_id - 11]


def parse_class(token) -> int:
    s = str(token).strip().upper()
    if s in _NATURAL_NAMES:
        return 11 + _NATURAL_NAMES.index(s)
    value = int(s)
    if value not in ALL_CLASSES:
        raise ValueError(f"not an LCZ class: {token}")
    return value


@dataclass
class ReferencePolygon:
    id: int
    polygon: Polygon
    lcz: int
    weight_etc: float = 0.0

    @property
    def weight_area(self) -> float:
        return self.polygon.area / 10_000.0  # hectares


# ---------------------------------------------------------------------------
# Reference preparation


def _perpendicular_cut(poly: Polygon, along_longer: bool) -> tuple[Polygon, Polygon] | None:
    """Split `poly` into two equal-area parts with a straight line
    perpendicular to the chosen minimum-rotated-rectangle axis.

    The cut position is swept along the axis until the areas balance."""
    mrr = shapely.oriented_envelope(poly)
    if not isinstance(mrr, Polygon):
        return None
    coords = np.asarray(mrr.exterior.coords)
    e1, e2 = coords[1] - coords[0], coords[2] - coords[1]
    longer_first = np.hypot(*e1) >= np.hypot(*e2)
    axis = e1 if (longer_first == along_longer) else e2
    norm = np.hypot(*axis)
    if norm == 0:
        return None
    axis = axis / norm
    perp = np.array([-axis[1], axis[0]])
    pts = np.asarray(poly.exterior.coords)
    proj = pts @ axis
    lo, hi = proj.min(), proj.max()
    span = max(poly.bounds[2] - poly.bounds[0], poly.bounds[3] - poly.bounds[1]) * 4

    def halves(t: float):
        c = np.array(poly.centroid.coords[0]) + (t - (np.array(poly.centroid.coords[0]) @ axis)) * axis
        line = LineString([c - perp * span, c + perp * span])
        pieces = shapely_split(poly, line)
        a, b = [], []
        for piece in pieces.geoms:
            (a if np.array(piece.representative_point().coords[0]) @ axis <= t else b).append(piece)
        if not a or not b:
            return None
        return shapely.union_all(a), shapely.union_all(b)

    # Bisection on the cut position for equal areas.
    lo_t, hi_t = lo + 1e-9, hi - 1e-9
    target = poly.area / 2
    for _ in range(60):
        mid = (lo_t + hi_t) / 2
        parts = halves(mid)
        if parts is None:
            return None
        if parts[0].area < target:
            lo_t = mid
        else:
            hi_t = mid
    parts = halves((lo_t + hi_t) / 2)
    if parts is None:
        return None
    a, b = parts
    if a.area <= 0 or b.area <= 0 or a.is_empty or b.is_empty:
        return None
    return a, b


def split_singletons(reference: list[ReferencePolygon]) -> list[ReferencePolygon]:
    """Split the polygon of any class represented by a single sample into two
    equal-area parts so the class can appear in every training combination."""
    by_class: dict[int, list[ReferencePolygon]] = {}
    for rp in reference:
        by_class.setdefault(rp.lcz, []).append(rp)
    out: list[ReferencePolygon] = []
    next_id = max((rp.id for rp in reference), default=-1) + 1
    for rp in reference:
        if len(by_class[rp.lcz]) > 1:
            out.append(rp)
            continue
        parts = _perpendicular_cut(rp.polygon, along_longer=True)
        if parts is None:
            parts = _perpendicular_cut(rp.polygon, along_longer=False)
        if parts is None:
            raise ValueError(f"cannot split singleton polygon {rp.id} (class {rp.lcz})")
        a, b = parts

        def _poly(g):
            if isinstance(g, Polygon):
                return g
            return max(g.geoms, key=lambda p: p.area)

        out.append(ReferencePolygon(id=rp.id, polygon=_poly(a), lcz=rp.lcz))
        out.append(ReferencePolygon(id=next_id, polygon=_poly(b), lcz=rp.lcz))
        next_id += 1
    return out


@dataclass
class FoldAssignment:
    folds: dict[int, int]  # polygon id -> fold
    kind: str  # etc_count | area

    def fold_of(self, polygon_id: int) -> int:
        return self.folds[polygon_id]


def stratified_folds(
    reference: list[ReferencePolygon], kind: str = "etc_count", k: int = 5, seed: int = 0
) -> FoldAssignment:
    """Per class, assign polygons to folds with the longest-processing-time
    greedy heuristic on the stratification weight."""
    if kind not in ("etc_count", "area"):
        raise ValueError(f"unknown stratification kind: {kind}")
    rng = np.random.default_rng(seed)
    assignment: dict[int, int] = {}
    by_class: dict[int, list[ReferencePolygon]] = {}
    for rp in reference:
        by_class.setdefault(rp.lcz, []).append(rp)
    for lcz in sorted(by_class):
        group = list(by_class[lcz])
        rng.shuffle(group)
        weights = [
            rp.weight_etc if kind == "etc_count" else rp.weight_area for rp in group
        ]
        order = sorted(range(len(group)), key=lambda i: -weights[i])
        loads = [0.0] * k
        for i in order:
            fold = int(np.argmin(loads))  # ties -> lowest fold index
            assignment[group[i].id] = fold
            loads[fold] += weights[i]
    return FoldAssignment(folds=assignment, kind=kind)


def label_etcs(
    cells: list[EtcCell],
    buildings: list[Building],
    reference: list[ReferencePolygon],
    folds: FoldAssignment | None = None,
) -> dict[int, tuple[int, int | None]]:
    """cell id -> (lcz, fold) for cells whose parent-building centroid falls
    inside a reference polygon; other cells are unlabeled."""
    by_id = {b.id: b for b in buildings}
    polys = [rp.polygon for rp in reference]
    tree = STRtree(polys) if polys else None
    labels: dict[int, tuple[int, int | None]] = {}
    for cell in cells:
        centroid = by_id[cell.building_id].footprint.centroid
        if tree is None:
            continue
        hits = sorted(
            int(i) for i in tree.query(centroid, predicate="intersects")
            if polys[int(i)].covers(centroid)
        )
        if not hits:
            continue
        rp = reference[hits[0]]
        fold = folds.fold_of(rp.id) if folds is not None else None
        labels[cell.id] = (rp.lcz, fold)
    return labels


def count_etcs_per_polygon(
    reference: list[ReferencePolygon], cells: list[EtcCell], buildings: list[Building]
) -> None:
    """Fill weight_etc in place from building-centroid containment."""
    by_id = {b.id: b for b in buildings}
    polys = [rp.polygon for rp in reference]
    tree = STRtree(polys)
    counts = np.zeros(len(reference))
    for cell in cells:
        centroid = by_id[cell.building_id].footprint.centroid
        hits = sorted(
            int(i) for i in tree.query(centroid, predicate="intersects")
            if polys[int(i)].covers(centroid)
        )
        if hits:
            counts[hits[0]] += 1
    for rp, c in zip(reference, counts):
        rp.weight_etc = float(c)


# ---------------------------------------------------------------------------
# Scoring


@dataclass
class FoldScores:
    oa: float
    f1_weighted: float
    f1_urban: float  # NaN when no urban support
    f1_natural: float  # NaN when no natural support
    per_class_f1: dict[int, float]
    confusion: np.ndarray  # (17, 17) over ALL_CLASSES

    def as_dict(self) -> dict:
        return {
            "oa": self.oa,
            "f1_weighted": self.f1_weighted,
            "f1_urban": None if np.isnan(self.f1_urban) else self.f1_urban,
            "f1_natural": None if np.isnan(self.f1_natural) else self.f1_natural,
            "per_class_f1": {class_name(c): v for c, v in self.per_class_f1.items()},
        }


def scores(y_true, y_pred) -> FoldScores:
    """OA, support-weighted F1 and its urban/natural restrictions."""
    y_true = np.asarray([int(v) for v in y_true])
    y_pred = np.asarray([int(v) for v in y_pred])
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ValueError("label vectors must be equal-length and non-empty")
    idx = {c: i for i, c in enumerate(ALL_CLASSES)}
    confusion = np.zeros((len(ALL_CLASSES), len(ALL_CLASSES)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[idx[t], idx[p]] += 1
    oa = float(np.trace(confusion) / confusion.sum())

    per_class_f1: dict[int, float] = {}
    supports: dict[int, int] = {}
    for c in ALL_CLASSES:
        i = idx[c]
        tp = confusion[i, i]
        fn = confusion[i].sum() - tp
        fp = confusion[:, i].sum() - tp
        supports[c] = int(confusion[i].sum())
        denom = 2 * tp + fp + fn
        per_class_f1[c] = float(2 * tp / denom) if denom > 0 else 0.0

    def weighted(classes) -> float:
        total = sum(supports[c] for c in classes)
        if total == 0:
            return float("nan")
        return float(sum(supports[c] * per_class_f1[c] for c in classes) / total)

    return FoldScores(
        oa=oa,
        f1_weighted=weighted(ALL_CLASSES),
        f1_urban=weighted(URBAN_CLASSES),
        f1_natural=weighted(NATURAL_CLASSES),
        per_class_f1=per_class_f1,
        confusion=confusion,
    )


@dataclass
class EvaluationReport:
    per_fold: list[FoldScores]
    averaged: dict = field(default_factory=dict)
    spread: dict = field(default_factory=dict)
    confusion: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {
            "per_fold": [fs.as_dict() for fs in self.per_fold],
            "averaged": self.averaged,
            "spread": self.spread,
            "confusion": self.confusion.tolist() if self.confusion is not None else None,
            "classes": [class_name(c) for c in ALL_CLASSES],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=1)


def aggregate_report(per_fold: list[FoldScores]) -> EvaluationReport:
    """Fold metrics averaged arithmetically; confusion matrices summed.

    Folds where a restricted F1 is undefined drop out of its average."""
    confusion = np.sum([fs.confusion for fs in per_fold], axis=0)
    averaged, spread = {}, {}
    for key in ("oa", "f1_weighted", "f1_urban", "f1_natural"):
        vals = np.array([getattr(fs, key) for fs in per_fold], dtype=float)
        defined = vals[~np.isnan(vals)]
        averaged[key] = float(defined.mean()) if defined.size else None
        spread[key] = float(defined.max() - defined.min()) if defined.size else None
    class_means = {}
    for c in ALL_CLASSES:
        vals = [fs.per_class_f1[c] for fs in per_fold if fs.confusion[ALL_CLASSES.index(c)].sum() > 0]
        if vals:
            class_means[class_name(c)] = float(np.mean(vals))
    averaged["per_class_f1"] = class_means
    return EvaluationReport(per_fold=per_fold, averaged=averaged, spread=spread, confusion=confusion)


# ---------------------------------------------------------------------------
# S1 grid aggregation and map emission


def s1_to_grid(
    cell_labels: dict[int, int], cells: list[EtcCell], grid: GridGeometry
) -> np.ndarray:
    """Majority label per grid cell by summed intersection area; 0 = nodata;
    area ties go to the lower class id."""
    labeled = [c for c in cells if c.id in cell_labels]
    geoms = [c.polygon for c in labeled]
    tree = STRtree(geoms) if geoms else None
    out = np.zeros((grid.height, grid.width), dtype=np.int32)
    px = grid.pixel_size
    for r in range(grid.height):
        for col in range(grid.width):
            x0 = grid.origin_x + col * px
            y1 = grid.origin_y - r * px
            pixel = box(x0, y1 - px, x0 + px, y1)
            if tree is None:
                continue
            areas: dict[int, float] = {}
            for i in tree.query(pixel, predicate="intersects"):
                cell = labeled[int(i)]
                a = pixel.intersection(cell.polygon).area
                if a > 0:
                    label = cell_labels[cell.id]
                    areas[label] = areas.get(label, 0.0) + a
            if areas:
                best = max(sorted(areas), key=lambda c: (areas[c], -c))
                out[r, col] = best
    return out


def _hex_to_rgb(color: str) -> tuple[int, int, int]:
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))


def emit_map(
    labels,
    out_dir: str | Path,
    stem: str,
    grid: GridGeometry | None = None,
    cells: list[EtcCell] | None = None,
) -> list[Path]:
    """Write a classified map: GeoTIFF + PNG for grids, GeoJSON for cells,
    plus a JSON legend of the classes present."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    present: set[int] = set()

    if grid is not None:
        arr = np.asarray(labels)
        present = {int(v) for v in np.unique(arr) if v > 0}
        data = arr.astype(np.float32)
        data[data == 0] = np.nan
        tif = out_dir / f"{stem}.tif"
        write_geotiff(tif, Raster(geometry=grid, data=data[None], band_names=["lcz"]))
        written.append(tif)
        rgb = np.zeros((arr.shape[0], arr.shape[1], 3), dtype=np.uint8)
        for c in present:
            rgb[arr == c] = _hex_to_rgb(LCZ_COLORS[c])
        png = out_dir / f"{stem}.png"
        Image.fromarray(rgb).save(png)
        written.append(png)
    else:
        assert cells is not None
        label_map = dict(labels)
        keep = [c for c in cells if c.id in label_map]
        present = {int(label_map[c.id]) for c in keep}
        fc = FeatureCollection(
            ids=[c.id for c in keep],
            geometries=[c.polygon for c in keep],
            properties=[
                {"lcz": int(label_map[c.id]), "lcz_name": class_name(label_map[c.id])}
                for c in keep
            ],
        )
        path = out_dir / f"{stem}.geojson"
        write_vector(path, fc)
        written.append(path)

    legend = {
        class_name(c): {"class_id": c, "color": LCZ_COLORS[c]} for c in sorted(present)
    }
    legend_path = out_dir / f"{stem}_legend.json"
    with open(legend_path, "w") as fh:
        json.dump(legend, fh, indent=1)
    written.append(legend_path)
    return written
