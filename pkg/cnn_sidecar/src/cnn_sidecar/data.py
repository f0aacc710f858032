"""Patch extraction, fold-aware normalization and the smoothed class sampler."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from morpholcz import fusion
from morpholcz.evaluation import FoldAssignment, ReferencePolygon
from morpholcz.gridraster import read_geotiff
from morpholcz.pipeline import SiteConfig
from morpholcz.vecio import read_vector

ALPHA = 0.5
EPOCH_FACTOR = 2  # sampled epoch is twice the training-set size


class DataError(ValueError):
    pass


@dataclass
class PatchDataset:
    """All sliding-window patches of one site, labeled where reference exists.

    `tensors` is (n, bands, size, size) float32 with nodata already zeroed;
    `labels` is -1 for unlabeled patches and `folds` -1 correspondingly.
    """

    tensors: torch.Tensor
    labels: np.ndarray
    folds: np.ndarray
    patch_ids: np.ndarray
    grid100: object
    classes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.classes = np.unique(self.labels[self.labels >= 0])

    def __len__(self) -> int:
        return int(self.tensors.shape[0])

    def train_rows(self, fold: int) -> np.ndarray:
        return np.nonzero((self.labels >= 0) & (self.folds != fold))[0]

    def test_rows(self, fold: int) -> np.ndarray:
        return np.nonzero((self.labels >= 0) & (self.folds == fold))[0]


def load_patches(site_dir: str | Path) -> PatchDataset:
    """Build the patch dataset from a site directory holding `site.ini` and
    the finished primary `folds` stage."""
    site = Path(site_dir)
    cfg = SiteConfig.from_ini(site / "site.ini")
    if not cfg.imagery:
        raise DataError("site config declares no imagery")
    imagery = read_geotiff(cfg.imagery)
    out = Path(cfg.out)
    ref_path = out / "folds" / "reference.geojson"
    if not ref_path.exists():
        raise DataError(f"{ref_path} missing; run the primary folds stage first")
    fc = read_vector(ref_path)
    reference = [
        ReferencePolygon(id=i, polygon=g, lcz=int(p["lcz"]))
        for i, g, p in zip(fc.ids, fc.geometries, fc.properties)
    ]
    folds = FoldAssignment(
        folds={i: int(p["fold_area"]) for i, p in zip(fc.ids, fc.properties)},
        kind="area",
    )
    index = fusion.make_patches(
        imagery.geometry, reference, size_m=cfg.patch_size_m, step_m=cfg.patch_step_m
    )
    cell_labels = fusion.label_grid_cells(index.grid100, reference, folds)

    s = index.size_px
    data = np.nan_to_num(imagery.data, nan=0.0)
    tensors = np.stack([
        data[:, p.row0 : p.row0 + s, p.col0 : p.col0 + s] for p in index.patches
    ])
    labels = np.array([
        cell_labels[p.id][0] if p.id in cell_labels else -1 for p in index.patches
    ])
    fold_of = np.array([
        cell_labels[p.id][1] if p.id in cell_labels else -1 for p in index.patches
    ])
    return PatchDataset(
        tensors=torch.from_numpy(tensors.astype(np.float32)),
        labels=labels,
        folds=fold_of,
        patch_ids=np.array(index.ids()),
        grid100=index.grid100,
    )


@dataclass
class Normalization:
    """Per-band mean and standard deviation, training folds only."""

    mean: torch.Tensor  # (bands,)
    std: torch.Tensor

    def apply(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.mean[:, None, None]) / self.std[:, None, None]


def fit_normalization(tensors: torch.Tensor, rows: np.ndarray) -> Normalization:
    sub = tensors[rows]
    mean = sub.mean(dim=(0, 2, 3))
    std = sub.std(dim=(0, 2, 3), unbiased=False)
    std = torch.where(std > 0, std, torch.ones_like(std))
    return Normalization(mean=mean, std=std)


def sampler_weights(labels: np.ndarray, alpha: float = ALPHA) -> np.ndarray:
    """Per-sample weight proportional to class frequency to the power -alpha."""
    classes, counts = np.unique(labels, return_counts=True)
    freq = counts / counts.sum()
    per_class = {c: f ** (-alpha) for c, f in zip(classes, freq)}
    return np.array([per_class[c] for c in labels])


def expected_proportions(labels: np.ndarray, alpha: float = ALPHA) -> dict[int, float]:
    """Closed-form sampled class shares: f^(1-alpha) / sum of f^(1-alpha)."""
    classes, counts = np.unique(labels, return_counts=True)
    freq = counts / counts.sum()
    smoothed = freq ** (1 - alpha)
    smoothed = smoothed / smoothed.sum()
    return {int(c): float(s) for c, s in zip(classes, smoothed)}


def make_sampler(labels: np.ndarray, seed: int, alpha: float = ALPHA):
    gen = torch.Generator().manual_seed(seed)
    weights = torch.as_tensor(sampler_weights(labels, alpha), dtype=torch.double)
    return torch.utils.data.WeightedRandomSampler(
        weights, num_samples=EPOCH_FACTOR * len(labels), replacement=True, generator=gen
    )


def augment(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Random horizontal/vertical flips and 90-degree rotations."""
    if torch.rand((), generator=gen) < 0.5:
        x = torch.flip(x, dims=[-1])
    if torch.rand((), generator=gen) < 0.5:
        x = torch.flip(x, dims=[-2])
    k = int(torch.randint(0, 4, (), generator=gen))
    if k:
        x = torch.rot90(x, k, dims=[-2, -1])
    return x
