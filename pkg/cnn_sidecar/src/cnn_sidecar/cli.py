"""Command line entry points: train a fold, emit the scene grid, export
embeddings for the fusion scheme."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import data as d
from . import infer as inf
from . import train as tr

logger = logging.getLogger("cnn_sidecar")


def _site_out(site: str) -> Path:
    from morpholcz.pipeline import SiteConfig

    cfg = SiteConfig.from_ini(Path(site) / "site.ini")
    return Path(cfg.out)


def _checkpoint_path(site: str, fold: int) -> Path:
    return _site_out(site) / "cnn" / f"fold_{fold}.pt"


@click.group()
def main() -> None:
    """Scene-classification CNN sidecar."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


@main.command()
@click.option("--site", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--fold", required=True, type=int)
@click.option("--epochs", default=tr.MAX_EPOCHS, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def train(site: str, fold: int, epochs: int, seed: int) -> None:
    """Train one fold and save its checkpoint under OUT/cnn/."""
    try:
        dataset = d.load_patches(site)
        ckpt = tr.train_cnn(dataset, fold, epochs=epochs, seed=seed)
    except (d.DataError, tr.TrainingError) as exc:
        raise click.ClickException(str(exc))
    path = _checkpoint_path(site, fold)
    path.parent.mkdir(parents=True, exist_ok=True)
    tr.save_checkpoint(ckpt, path)
    best = ckpt.traces[ckpt.epoch]
    click.echo(
        f"fold {fold}: epoch {ckpt.epoch} selected "
        f"(train OA {best.train_oa:.4f}, test OA {best.test_oa:.4f}) -> {path}"
    )


@main.command()
@click.option("--site", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--fold", required=True, type=int)
def infer(site: str, fold: int) -> None:
    """Write the 100 m scene grid from a trained fold checkpoint."""
    path = _checkpoint_path(site, fold)
    if not path.exists():
        raise click.ClickException(f"no checkpoint at {path}; run train first")
    try:
        dataset = d.load_patches(site)
        ckpt = tr.load_checkpoint(path)
        written = inf.infer_s2(dataset, ckpt, _site_out(site) / "s2", stem=f"s2_fold{fold}")
    except (d.DataError, tr.TrainingError) as exc:
        raise click.ClickException(str(exc))
    for p in written:
        click.echo(str(p))


@main.command()
@click.option("--site", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--fold", required=True, type=int)
@click.option("--out-dir", default=None, type=click.Path(file_okay=False),
              help="Embeddings directory; defaults to OUT/embeddings.")
def embed(site: str, fold: int, out_dir: str | None) -> None:
    """Export per-patch embedding vectors for the fusion scheme."""
    path = _checkpoint_path(site, fold)
    if not path.exists():
        raise click.ClickException(f"no checkpoint at {path}; run train first")
    dest = Path(out_dir) if out_dir else _site_out(site) / "embeddings"
    dest.mkdir(parents=True, exist_ok=True)
    try:
        dataset = d.load_patches(site)
        ckpt = tr.load_checkpoint(path)
        table = inf.export_embeddings(dataset, ckpt, dest / f"fold_{fold}.csv")
    except (d.DataError, tr.TrainingError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(table.patch_ids)} x {table.dim} embeddings to {dest / f'fold_{fold}.csv'}")


if __name__ == "__main__":
    sys.exit(main())
