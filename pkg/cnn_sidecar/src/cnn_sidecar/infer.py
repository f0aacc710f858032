"""Scene-scheme map emission and embedding export from a trained checkpoint."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from morpholcz import evaluation as ev
from morpholcz import fusion

from .data import PatchDataset
from .train import Checkpoint, TrainingError


def _predict(dataset: PatchDataset, ckpt: Checkpoint) -> np.ndarray:
    """LCZ class id per patch, in dataset order."""
    if dataset.tensors.shape[1] != ckpt.in_bands:
        raise TrainingError(
            f"checkpoint expects {ckpt.in_bands} bands, patches have "
            f"{dataset.tensors.shape[1]}"
        )
    model = ckpt.build_model()
    with torch.no_grad():
        idx = model(ckpt.norm.apply(dataset.tensors)).argmax(dim=1).numpy()
    return np.array(ckpt.classes)[idx]

def infer_s2(dataset: PatchDataset, ckpt: Checkpoint, out_dir: str | Path,
             stem: str = "s2_grid") -> list[Path]:
    """Classify every patch and write the 100 m scene-scheme grid
    (GeoTIFF + PNG + legend). Returns the written paths."""
    preds = _predict(dataset, ckpt)
    grid = dataset.grid100
    arr = np.zeros((grid.height, grid.width), dtype=np.int32)
    for pid, lcz in zip(dataset.patch_ids, preds):
        r, c = divmod(int(pid), grid.width)
        arr[r, c] = int(lcz)
    return ev.emit_map(arr, out_dir, stem, grid=grid)


def export_embeddings(dataset: PatchDataset, ckpt: Checkpoint,
                      path: str | Path) -> fusion.EmbeddingTable:
    """Write penultimate feature vectors for every patch as an embedding
    table keyed by patch id, with the checkpoint's fold in the sidecar."""
    if dataset.tensors.shape[1] != ckpt.in_bands:
        raise TrainingError(
            f"checkpoint expects {ckpt.in_bands} bands, patches have "
            f"{dataset.tensors.shape[1]}"
        )
    model = ckpt.build_model()
    with torch.no_grad():
        vectors = model.features(ckpt.norm.apply(dataset.tensors)).numpy()
    table = fusion.EmbeddingTable(
        patch_ids=[int(p) for p in dataset.patch_ids],
        folds=[int(f) for f in dataset.folds],
        labels=[int(l) if l >= 0 else None for l in dataset.labels],
        vectors=vectors.astype(np.float64),
        producer="cnn_sidecar",
        fold=ckpt.fold,
    )
    fusion.write_embedding_table(table, path)
    return table
