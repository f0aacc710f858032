"""Sampler arithmetic, fold-clean normalization, augmentation and loading."""

import numpy as np
import pytest
import torch

from cnn_sidecar import data as d
from conftest import toy_dataset


class TestSampler:
    def test_expected_proportions_formula(self):
        labels = np.array([1] * 90 + [2] * 10)
        props = d.expected_proportions(labels, alpha=0.5)
        minority = 0.1**0.5 / (0.9**0.5 + 0.1**0.5)
        assert props[2] == pytest.approx(minority)
        assert props[1] + props[2] == pytest.approx(1.0)

    def test_sampled_shares_match_smoothed_frequencies(self):
        # 90/10 imbalance with alpha 0.5 should sample the minority at ~25%.
        labels = np.array([1] * 45_000 + [2] * 5_000)
        sampler = d.make_sampler(labels, seed=0)
        drawn = labels[np.fromiter(iter(sampler), dtype=int)]
        assert len(drawn) == 2 * len(labels)
        share = (drawn == 2).mean()
        assert share == pytest.approx(0.25, abs=0.02)

    def test_weights_scale_with_inverse_root_frequency(self):
        labels = np.array([1, 1, 1, 1, 2])
        w = d.sampler_weights(labels, alpha=0.5)
        assert w[4] / w[0] == pytest.approx((0.8 / 0.2) ** 0.5)

    def test_epoch_is_twice_the_training_set(self):
        sampler = d.make_sampler(np.array([1, 1, 2]), seed=0)
        assert len(list(sampler)) == 6


class TestNormalization:
    def test_stats_come_from_training_rows_only(self):
        g = torch.Generator().manual_seed(0)
        x = torch.randn((10, 3, 4, 4), generator=g)
        train_rows = np.arange(8)
        before = d.fit_normalization(x, train_rows)
        x[9, 0, 0, 0] += 1000.0  # row 9 is held out
        after = d.fit_normalization(x, train_rows)
        assert torch.equal(before.mean, after.mean)
        assert torch.equal(before.std, after.std)
        x[0, 0, 0, 0] += 1000.0  # a training row does move the stats
        assert not torch.equal(before.mean, d.fit_normalization(x, train_rows).mean)

    def test_apply_standardizes_training_rows(self):
        g = torch.Generator().manual_seed(1)
        x = torch.randn((50, 2, 4, 4), generator=g) * 5 + 3
        rows = np.arange(50)
        norm = d.fit_normalization(x, rows)
        z = norm.apply(x)
        assert z.mean(dim=(0, 2, 3)).abs().max() < 1e-5
        assert (z.std(dim=(0, 2, 3), unbiased=False) - 1).abs().max() < 1e-5

    def test_constant_band_keeps_unit_std(self):
        x = torch.ones((4, 1, 2, 2)) * 7
        norm = d.fit_normalization(x, np.arange(4))
        assert torch.equal(norm.std, torch.ones(1))
        assert norm.apply(x).abs().max() == 0


class TestAugment:
    def test_preserves_per_channel_values(self):
        g = torch.Generator().manual_seed(2)
        x = torch.randn((3, 2, 6, 6), generator=g)
        seen_change = False
        for _ in range(20):
            out = d.augment(x, g)
            assert out.shape == x.shape
            assert torch.equal(
                x.flatten(start_dim=2).sort(dim=2).values,
                out.flatten(start_dim=2).sort(dim=2).values,
            )
            seen_change = seen_change or not torch.equal(out, x)
        assert seen_change

    def test_deterministic_under_a_seed(self):
        x = torch.randn((2, 1, 4, 4), generator=torch.Generator().manual_seed(3))
        a = d.augment(x, torch.Generator().manual_seed(5))
        b = d.augment(x, torch.Generator().manual_seed(5))
        assert torch.equal(a, b)


class TestPatchDataset:
    def test_row_selectors(self):
        ds = toy_dataset()
        assert set(ds.train_rows(0)) | set(ds.test_rows(0)) == set(range(len(ds)))
        assert len(ds.test_rows(0)) == 2
        assert list(ds.classes) == [3, 6]

    def test_load_patches_from_site(self, dataset):
        assert len(dataset) == 49
        assert dataset.tensors.shape[1:] == (10, 32, 32)
        assert dataset.tensors.dtype == torch.float32
        # the synthetic city labels every patch center
        assert (dataset.labels >= 0).all()
        assert set(dataset.folds) <= set(range(5))
        assert len(set(dataset.patch_ids.tolist())) == 49

    def test_load_patches_requires_imagery(self, tmp_path):
        (tmp_path / "site.ini").write_text("[paths]\nout = out\n")
        with pytest.raises(d.DataError, match="imagery"):
            d.load_patches(tmp_path)

    def test_load_patches_requires_folds_stage(self, site, tmp_path):
        (tmp_path / "site.ini").write_text(
            f"[paths]\nimagery = {site / 'imagery.tif'}\nout = out\n"
        )
        with pytest.raises(d.DataError, match="folds"):
            d.load_patches(tmp_path)
