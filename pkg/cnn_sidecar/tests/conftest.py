"""Shared fixtures: the synthetic site with a finished primary run, its patch
dataset, and small helpers for hand-built datasets."""

from __future__ import annotations

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from cnn_sidecar.data import PatchDataset, load_patches
from morpholcz.cli import main as morpholcz_main


@pytest.fixture(scope="session")
def site(tmp_path_factory):
    """Synthetic city with all primary pipeline stages run."""
    root = tmp_path_factory.mktemp("site")
    runner = CliRunner()
    result = runner.invoke(morpholcz_main, ["synth", "--out", str(root), "--seed", "0"])
    assert result.exit_code == 0, result.output
    result = runner.invoke(morpholcz_main, ["run", "--config", str(root / "site.ini")])
    assert result.exit_code == 0, result.output
    return root


@pytest.fixture(scope="session")
def dataset(site) -> PatchDataset:
    return load_patches(site)


def toy_dataset(n_per_class: int = 20, bands: int = 2, size: int = 8,
                seed: int = 7, separation: float = 3.0) -> PatchDataset:
    """Two well-separated classes; one test row per class in fold 0, the rest
    in fold 1."""
    g = torch.Generator().manual_seed(seed)
    n = 2 * n_per_class
    x = torch.randn((n, bands, size, size), generator=g)
    x[:n_per_class] += separation
    labels = np.array([3] * n_per_class + [6] * n_per_class)
    folds = np.ones(n, dtype=int)
    folds[[0, n_per_class]] = 0
    return PatchDataset(tensors=x, labels=labels, folds=folds,
                        patch_ids=np.arange(n), grid100=None)
