"""Scene-grid emission, embedding export, the CLI and the fusion handoff."""

import json

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from cnn_sidecar import infer as inf
from cnn_sidecar import train as tr
from cnn_sidecar.cli import main as cnn_main
from cnn_sidecar.data import load_patches
from cnn_sidecar.model import EMBED_DIM
from morpholcz import fusion
from morpholcz.gridraster import read_geotiff
from morpholcz.pipeline import Pipeline, SiteConfig
from conftest import toy_dataset

EPOCHS = 3  # enough to exercise the machinery; quality is not under test here


@pytest.fixture(scope="module")
def fold0(dataset):
    return tr.train_cnn(dataset, 0, epochs=EPOCHS, seed=0)


class TestInferS2:
    def test_grid_covers_every_patch(self, dataset, fold0, tmp_path):
        written = inf.infer_s2(dataset, fold0, tmp_path)
        assert [p.name for p in written] == [
            "s2_grid.tif", "s2_grid.png", "s2_grid_legend.json"
        ]
        raster = read_geotiff(written[0])
        assert raster.geometry.pixel_size == 100.0
        labeled = ~np.isnan(raster.data[0])
        assert labeled.sum() == len(dataset)
        values = set(raster.data[0][labeled].astype(int).tolist())
        assert values <= set(fold0.classes)
        legend = json.loads(written[2].read_text())
        assert {v["class_id"] for v in legend.values()} == values

    def test_predictions_deterministic_in_eval_mode(self, dataset, fold0):
        a = inf._predict(dataset, fold0)
        b = inf._predict(dataset, fold0)
        assert np.array_equal(a, b)

    def test_band_mismatch_rejected(self, fold0):
        ds = toy_dataset(bands=3, size=32)
        with pytest.raises(tr.TrainingError, match="bands"):
            inf.infer_s2(ds, fold0, ".")


class TestEmbeddings:
    def test_round_trip_is_bit_exact(self, dataset, fold0, tmp_path):
        path = tmp_path / "fold_0.csv"
        table = inf.export_embeddings(dataset, fold0, path)
        assert table.vectors.shape == (len(dataset), EMBED_DIM)
        back = fusion.read_embedding_table(path)
        assert np.array_equal(back.vectors, table.vectors)
        assert back.producer == "cnn_sidecar"
        assert back.fold == 0
        assert back.patch_ids == [int(p) for p in dataset.patch_ids]
        assert back.labels == [int(l) for l in dataset.labels]

    def test_band_mismatch_rejected(self, fold0, tmp_path):
        ds = toy_dataset(bands=3, size=32)
        with pytest.raises(tr.TrainingError, match="bands"):
            inf.export_embeddings(ds, fold0, tmp_path / "e.csv")


class TestCli:
    def test_train_infer_embed(self, site):
        runner = CliRunner()
        args = ["--site", str(site), "--fold", "1"]
        result = runner.invoke(cnn_main, ["train", *args, "--epochs", "2", "--seed", "0"])
        assert result.exit_code == 0, result.output
        assert (site / "out" / "cnn" / "fold_1.pt").exists()
        assert "epoch" in result.output

        result = runner.invoke(cnn_main, ["infer", *args])
        assert result.exit_code == 0, result.output
        assert (site / "out" / "s2" / "s2_fold1.tif").exists()

        result = runner.invoke(cnn_main, ["embed", *args])
        assert result.exit_code == 0, result.output
        emb = site / "out" / "embeddings" / "fold_1.csv"
        assert emb.exists() and emb.with_suffix(".csv.json").exists()

    def test_infer_without_checkpoint_fails(self, site):
        result = CliRunner().invoke(cnn_main, ["infer", "--site", str(site), "--fold", "9"])
        assert result.exit_code != 0
        assert "train first" in result.output


class TestFusionHandoff:
    def test_s4_runs_on_sidecar_embeddings(self, site, dataset):
        emb_dir = site / "out" / "embeddings"
        emb_dir.mkdir(exist_ok=True)
        for fold in range(5):
            ckpt = tr.train_cnn(dataset, fold, epochs=EPOCHS, seed=fold)
            inf.export_embeddings(dataset, ckpt, emb_dir / f"fold_{fold}.csv")
        ini = site / "site_s4.ini"
        ini.write_text(
            (site / "site.ini").read_text().replace(
                "out = out\n", "out = out\nembeddings = out/embeddings\n"
            )
        )
        cfg = SiteConfig.from_ini(ini)
        Pipeline(cfg).run(["s4"])

        report = json.loads((site / "out" / "s4" / "report.json").read_text())
        assert report["scheme"] == "s4"
        assert len(report["per_fold"]) == 5
        assert 0.0 <= report["averaged"]["oa"] <= 1.0
        s3 = json.loads((site / "out" / "s3" / "report.json").read_text())
        delta = report["averaged"]["f1_urban"] - s3["averaged"]["f1_urban"]
        assert np.isfinite(delta)
