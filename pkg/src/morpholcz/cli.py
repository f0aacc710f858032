"""Command-line entry point: staged pipeline runs and the synthetic site."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .ingest import IngestError
from .pipeline import ConfigError, Pipeline, SiteConfig, StageError
from .vecio import VectorIOError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STAGE = 4

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


def _run_stages(config_path: str, stages: list[str]) -> None:
    try:
        cfg = SiteConfig.from_ini(config_path)
        pipe = Pipeline(cfg)
        pipe.run(stages)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (IngestError, VectorIOError, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except StageError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_STAGE)
    if pipe.skipped:
        click.echo(f"cached (no-op): {', '.join(pipe.skipped)}")


def _config_option(fn):
    return click.option(
        "--config", "config_path", required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="Site configuration file (INI).",
    )(fn)


@click.group()
def main() -> None:
    """Predict Local Climate Zones from urban morphometrics."""


def _stage_command(name: str, stages: list[str], doc: str):
    @main.command(name=name, help=doc)
    @_config_option
    def _cmd(config_path: str) -> None:
        _run_stages(config_path, stages)

    return _cmd


_stage_command("ingest", ["ingest"], "Load and preprocess the vector layers.")
_stage_command("tessellate", ["tessellate"], "Build enclosures and tessellation cells.")
_stage_command("metrics", ["metrics"], "Compute the 107 primary morphometric attributes.")
_stage_command("context", ["context"], "Expand primary attributes into 321 contextual ones.")
_stage_command("folds", ["folds"], "Prepare reference polygons and stratified folds.")
_stage_command("train-s1", ["s1"], "Cross-validate the morphometric scheme (S1).")
_stage_command("rasterize", ["rasterize"], "Rasterize the top attributes onto the imagery grid.")
_stage_command("train-s3", ["s3"], "Cross-validate the band-stacking scheme (S3).")
_stage_command("train-s4", ["s4"], "Cross-validate the embedding-fusion scheme (S4).")
_stage_command("map", ["maps"], "Emit classified LCZ maps from the S1 predictions.")
_stage_command(
    "run", list(Pipeline.STAGES), "Run every stage of the pipeline in order."
)


@main.command()
@_config_option
@click.option("--scheme", type=click.Choice(["s1", "s3", "s4"]), default=None,
              help="Limit the summary to one scheme.")
def evaluate(config_path: str, scheme: str | None) -> None:
    """Print the per-scheme evaluation summaries."""
    try:
        cfg = SiteConfig.from_ini(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    out = Path(cfg.out)
    schemes = [scheme] if scheme else ["s1", "s3", "s4"]
    found = False
    for s in schemes:
        path = out / s / "report.json"
        if not path.exists():
            continue
        found = True
        doc = json.loads(path.read_text())
        avg = doc["averaged"]
        def fmt(v):
            return "n/a" if v is None else f"{v:.4f}"

        click.echo(
            f"{s}: OA {avg['oa']:.4f}  F1w {avg['f1_weighted']:.4f}"
            f"  F1U {fmt(avg['f1_urban'])}  F1N {fmt(avg['f1_natural'])}"
            f"  (spread OA {doc['spread']['oa']:.4f})"
        )
    if not found:
        click.echo("no evaluation reports found; run the schemes first", err=True)
        sys.exit(EXIT_DATA)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
def synth(out_dir: str, seed: int) -> None:
    """Generate the deterministic synthetic city and its site config."""
    from .evaluation import class_name
    from .gridraster import write_geotiff
    from .synth import synth_city
    from .types import FeatureCollection
    from .vecio import write_vector

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buildings, streets, reference, imagery, study = synth_city(seed=seed)
    crs = imagery.geometry.crs

    write_vector(out / "buildings.geojson", FeatureCollection(
        ids=list(range(len(buildings))), geometries=buildings,
        properties=[{} for _ in buildings], crs=crs,
    ))
    write_vector(out / "streets.geojson", FeatureCollection(
        ids=list(range(len(streets))), geometries=streets,
        properties=[{} for _ in streets], crs=crs,
    ))
    write_vector(out / "reference.geojson", FeatureCollection(
        ids=[rp.id for rp in reference], geometries=[rp.polygon for rp in reference],
        properties=[{"lcz": rp.lcz, "lcz_name": class_name(rp.lcz)} for rp in reference],
        crs=crs,
    ))
    write_vector(out / "study_area.geojson", FeatureCollection(
        ids=[0], geometries=[study], properties=[{}], crs=crs,
    ))
    write_geotiff(out / "imagery.tif", imagery)

    # Desk-scale tuning grid; the full grid stays available via config.
    (out / "site.ini").write_text(
        "[paths]\n"
        "buildings = buildings.geojson\n"
        "streets = streets.geojson\n"
        "study_area = study_area.geojson\n"
        "reference = reference.geojson\n"
        "imagery = imagery.tif\n"
        "out = out\n"
        "\n"
        "[forest]\n"
        "n_trees = 50\n"
        "depth_grid = 8, none\n"
        "feat_grid = sqrt\n"
        "\n"
        "[seeds]\n"
        f"seed = {seed}\n"
    )
    click.echo(
        f"synthetic site written to {out} "
        f"({len(buildings)} buildings, {len(reference)} reference polygons)"
    )


if __name__ == "__main__":
    main()
