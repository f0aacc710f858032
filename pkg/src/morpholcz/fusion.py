"""Raster-vector fusion: attribute rasterization, zonal statistics for the
band-stacking scheme, the sliding-window patch index and the embedding
concatenation scheme."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely
from shapely import STRtree

from .gridraster import GridGeometry, Raster
from .types import EtcCell

PATCH_SIZE_M = 320.0
PATCH_STEP_M = 100.0
CENTER_CELL_M = 100.0

ZONAL_STATS = ("mean", "max", "min")
PATCH_STAT_NAMES = ("mean", "min", "max", "std", "median")


@dataclass
class FeatureTable:
    """Keyed rows of named real-valued features; NaN marks missing."""

    keys: list[int]
    names: list[str]
    values: np.ndarray  # (n_rows, n_cols)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, path: str | Path, key_name: str = "key") -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([key_name] + self.names)
            for key, row in zip(self.keys, self.values):
                writer.writerow([key] + [("" if np.isnan(v) else repr(float(v))) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            keys, rows = [], []
            for rec in reader:
                keys.append(int(rec[0]))
                rows.append([float(v) if v else np.nan for v in rec[1:]])
        return cls(keys=keys, names=header[1:], values=np.asarray(rows, dtype=float))


# ---------------------------------------------------------------------------
# Rasterization


def rasterize_attributes(
    cells: list[EtcCell],
    subset: list[str],
    context_names: list[str],
    context_values: np.ndarray,
    grid: GridGeometry,
    crs: str | None = None,
) -> Raster:
    """One band per attribute in `subset`; each pixel takes the value of the
    cell containing its center, the lower cell id winning on shared edges."""
    if crs is not None and grid.crs is not None and str(crs) != str(grid.crs):
        raise ValueError(f"CRS mismatch: cells {crs} vs grid {grid.crs}")
    order = sorted(cells, key=lambda c: c.id)
    col_idx = [context_names.index(name) for name in subset]

    xs, ys = grid.pixel_centers()
    gx, gy = np.meshgrid(xs, ys)
    points = shapely.points(gx.ravel(), gy.ravel())
    owner = np.full(points.size, -1, dtype=np.int64)
    tree = STRtree([c.polygon for c in order])
    pt_i, cell_i = tree.query(points, predicate="intersects")
    # covers() includes boundary pixels; keep the lowest cell id per pixel
    for p, ci in zip(pt_i.tolist(), cell_i.tolist()):
        if owner[p] == -1 or ci < owner[p]:
            owner[p] = ci

    data = np.full((len(subset), grid.height, grid.width), np.nan, dtype=np.float32)
    flat = owner.reshape(grid.height, grid.width)
    hit = flat >= 0
    for b, j in enumerate(col_idx):
        vals = context_values[:, j]
        band = data[b]
        band[hit] = vals[flat[hit]]
    return Raster(geometry=grid, data=data, band_names=list(subset))


def coarsen_grid(grid: GridGeometry, factor: int = 10) -> GridGeometry:
    """The aligned coarse grid whose cells tile the fine grid in blocks."""
    if grid.width % factor or grid.height % factor:
        raise ValueError(f"grid {grid.width}x{grid.height} not divisible by {factor}")
    return GridGeometry(
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        pixel_size=grid.pixel_size * factor,
        width=grid.width // factor,
        height=grid.height // factor,
        crs=grid.crs,
    )


# ---------------------------------------------------------------------------
# S3: zonal statistics onto the 100 m grid


def zonal_s3(stack: Raster, cell100: GridGeometry) -> FeatureTable:
    """Per 100 m cell and band: mean, max, min over non-nodata pixels."""
    factor = int(round(cell100.pixel_size / stack.geometry.pixel_size))
    if stack.geometry.width != cell100.width * factor or stack.geometry.height != cell100.height * factor:
        raise ValueError("stack does not tile the 100 m grid")
    n_bands, h, w = stack.data.shape
    blocks = stack.data.reshape(n_bands, cell100.height, factor, cell100.width, factor)
    blocks = blocks.transpose(1, 3, 0, 2, 4).reshape(
        cell100.height * cell100.width, n_bands, factor * factor
    )
    names, cols = [], []
    with np.errstate(all="ignore"):
        for b, band in enumerate(stack.band_names):
            arr = blocks[:, b, :]
            for stat, fn in zip(ZONAL_STATS, (np.nanmean, np.nanmax, np.nanmin)):
                names.append(f"{band}_{stat}")
                cols.append(fn(arr, axis=1))
    values = np.column_stack(cols)
    keys = list(range(cell100.height * cell100.width))
    return FeatureTable(keys=keys, names=names, values=values)


def label_grid_cells(grid100: GridGeometry, reference, folds=None) -> dict[int, tuple[int, int | None]]:
    """100 m cell id -> (lcz, fold) by cell-center containment."""
    polys = [rp.polygon for rp in reference]
    if not polys:
        return {}
    tree = STRtree(polys)
    xs, ys = grid100.pixel_centers()
    labels: dict[int, tuple[int, int | None]] = {}
    for r in range(grid100.height):
        for c in range(grid100.width):
            pt = shapely.points(xs[c], ys[r])
            hits = sorted(
                int(i) for i in tree.query(pt, predicate="intersects")
                if polys[int(i)].covers(pt)
            )
            if not hits:
                continue
            rp = reference[hits[0]]
            fold = folds.fold_of(rp.id) if folds is not None else None
            labels[r * grid100.width + c] = (rp.lcz, fold)
    return labels


# ---------------------------------------------------------------------------
# Patches


@dataclass(frozen=True)
class Patch:
    id: int  # row-major id of the central 100 m cell
    row0: int  # top pixel row in the 10 m grid
    col0: int
    label: int | None = None


@dataclass
class PatchIndex:
    patches: list[Patch]
    size_px: int
    grid: GridGeometry  # the 10 m grid the windows index into
    grid100: GridGeometry
    dropped: int = 0

    def ids(self) -> list[int]:
        return [p.id for p in self.patches]


def make_patches(
    grid: GridGeometry,
    reference=None,
    size_m: float = PATCH_SIZE_M,
    step_m: float = PATCH_STEP_M,
) -> PatchIndex:
    """Sliding 320 m windows at 100 m step over the 10 m grid, each keyed by
    the 100 m cell containing its center and labeled by the reference polygon
    covering that center, when any."""
    px = grid.pixel_size
    size_px = int(round(size_m / px))
    step_px = int(round(step_m / px))
    extent_x = grid.width * px
    extent_y = grid.height * px
    if extent_x < size_m or extent_y < size_m:
        raise ValueError("imagery extent smaller than the patch size")
    # The keying grid may overhang the imagery when the extent is not a
    # multiple of the cell size; only cell ids are taken from it.
    grid100 = GridGeometry(
        origin_x=grid.origin_x,
        origin_y=grid.origin_y,
        pixel_size=CENTER_CELL_M,
        width=int(np.ceil(extent_x / CENTER_CELL_M)),
        height=int(np.ceil(extent_y / CENTER_CELL_M)),
        crs=grid.crs,
    )

    polys = [rp.polygon for rp in reference] if reference else []
    tree = STRtree(polys) if polys else None

    patches: list[Patch] = []
    dropped = 0
    n_rows = int(np.floor((extent_y - size_m) / step_m)) + 1
    n_cols = int(np.floor((extent_x - size_m) / step_m)) + 1
    for i in range(n_rows):
        for j in range(n_cols):
            r0, c0 = i * step_px, j * step_px
            if r0 + size_px > grid.height or c0 + size_px > grid.width:
                dropped += 1
                continue
            cx = grid.origin_x + (c0 + size_px / 2) * px
            cy = grid.origin_y - (r0 + size_px / 2) * px
            cr = int((grid.origin_y - cy) // grid100.pixel_size)
            cc = int((cx - grid.origin_x) // grid100.pixel_size)
            pid = cr * grid100.width + cc
            label = None
            if tree is not None:
                pt = shapely.points(cx, cy)
                hits = sorted(
                    int(k) for k in tree.query(pt, predicate="intersects")
                    if polys[int(k)].covers(pt)
                )
                if hits:
                    label = int(reference[hits[0]].lcz)
            patches.append(Patch(id=pid, row0=r0, col0=c0, label=label))
    return PatchIndex(patches=patches, size_px=size_px, grid=grid, grid100=grid100, dropped=dropped)


def patch_stats(morpho: Raster, patches: PatchIndex) -> FeatureTable:
    """Per patch and morphometric band: mean, min, max, population standard
    deviation and median over non-nodata pixels; all-nodata stays missing."""
    if morpho.geometry != patches.grid:
        raise ValueError("morphometric raster grid differs from the patch grid")
    s = patches.size_px
    names = [f"{band}_{stat}" for band in morpho.band_names for stat in PATCH_STAT_NAMES]
    values = np.full((len(patches.patches), len(names)), np.nan)
    fns = (np.nanmean, np.nanmin, np.nanmax, np.nanstd, np.nanmedian)
    with np.errstate(all="ignore"):
        for r, patch in enumerate(patches.patches):
            window = morpho.data[:, patch.row0 : patch.row0 + s, patch.col0 : patch.col0 + s]
            flat = window.reshape(window.shape[0], -1)
            for b in range(flat.shape[0]):
                col = flat[b][~np.isnan(flat[b])]
                if col.size == 0:
                    continue
                for k, fn in enumerate(fns):
                    values[r, b * len(PATCH_STAT_NAMES) + k] = fn(col)
    return FeatureTable(keys=patches.ids(), names=names, values=values)


# ---------------------------------------------------------------------------
# Embedding interchange and S4 assembly


@dataclass
class EmbeddingTable:
    patch_ids: list[int]
    folds: list[int]
    labels: list[int | None]
    vectors: np.ndarray  # (n, e)
    producer: str = "unknown"
    fold: int = -1

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    """CSV `patch_id, fold, label, e0..e{e-1}` plus a JSON sidecar with the
    declared dimension, producer tag, fold id and a sha256 checksum."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patch_id", "fold", "label"] + [f"e{i}" for i in range(table.dim)])
        for pid, fold, label, vec in zip(table.patch_ids, table.folds, table.labels, table.vectors):
            writer.writerow(
                [pid, fold, "" if label is None else label] + [repr(float(v)) for v in vec]
            )
    sidecar = {
        "dim": table.dim,
        "producer": table.producer,
        "fold": table.fold,
        "checksum": _file_sha256(path),
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)


def read_embedding_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    if _file_sha256(path) != sidecar["checksum"]:
        raise ValueError(f"{path}: checksum mismatch against sidecar")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        e = len(header) - 3
        patch_ids, folds, labels, rows = [], [], [], []
        for rec in reader:
            patch_ids.append(int(rec[0]))
            folds.append(int(rec[1]))
            labels.append(int(rec[2]) if rec[2] else None)
            rows.append([float(v) for v in rec[3:]])
    vectors = np.asarray(rows, dtype=float).reshape(len(rows), e)
    if e != sidecar["dim"]:
        raise ValueError(f"{path}: dimension {e} differs from declared {sidecar['dim']}")
    return EmbeddingTable(
        patch_ids=patch_ids,
        folds=folds,
        labels=labels,
        vectors=vectors,
        producer=sidecar.get("producer", "unknown"),
        fold=sidecar.get("fold", -1),
    )


def assemble_s4(embeddings: EmbeddingTable, stats: FeatureTable) -> FeatureTable:
    """Row-wise concatenation, embedding first, over the shared patch keys."""
    emb_keys = set(embeddings.patch_ids)
    stat_keys = set(stats.keys)
    if emb_keys != stat_keys:
        missing = sorted(stat_keys - emb_keys)
        extra = sorted(emb_keys - stat_keys)
        raise ValueError(
            f"patch key mismatch: missing from embeddings {missing}, unknown {extra}"
        )
    emb_row = {pid: i for i, pid in enumerate(embeddings.patch_ids)}
    order = [emb_row[k] for k in stats.keys]
    values = np.column_stack([embeddings.vectors[order], stats.values])
    names = [f"e{i}" for i in range(embeddings.dim)] + list(stats.names)
    return FeatureTable(keys=list(stats.keys), names=names, values=values)
