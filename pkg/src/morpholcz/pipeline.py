"""Per-site orchestration: configuration, staged execution and caching.

Each stage writes its artifacts under the site output directory and records
a content hash of its inputs; a rerun with unchanged inputs is a no-op.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import shapely

from . import evaluation as ev
from . import forest
from . import fusion
from . import ingest
from . import tessellation
from .catalog import contextual_names, metric_names
from .context import build_contiguity, contextualize, guard_contextual_width
from .gridraster import Raster, read_geotiff, write_geotiff
from .metrics import PrimaryMatrix, assemble_primary, write_catalog_json
from .types import Building, EtcCell, FeatureCollection
from .vecio import read_vector, write_vector

logger = logging.getLogger(__name__)

N_FOLDS = 5
TOP_K = 20


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class SiteConfig:
    """All knobs of one site run; paper constants appear as named defaults."""

    # paths
    buildings: str = ""
    streets: str = ""
    waterlines: str = ""
    waterbodies: str = ""
    study_area: str = ""
    reference: str = ""
    imagery: str = ""
    embeddings: str = ""  # directory of per-fold EmbeddingTable files
    out: str = "out"
    # ingest
    max_building_area: float = 200_000.0
    simplify_tol: float = 0.5
    merge_overlap_frac: float = 0.5
    small_building_area: float = 30.0
    snap_tol: float = 0.1
    skip_simplify: bool = False
    # tessellation
    segment_len: float = 0.5
    shrink: float = 0.4
    # context
    context_steps: int = 3
    # evaluation
    n_folds: int = N_FOLDS
    # fusion
    patch_size_m: float = 320.0
    patch_step_m: float = 100.0
    top_k: int = TOP_K
    # forest / tuning; "best" trains both weightings and keeps the one with
    # the higher combined weighted-F1 + urban-F1 on the test fold
    weighting: str = "best"
    n_trees: int = 100
    depth_grid: tuple = forest.DEFAULT_DEPTH_GRID
    feat_grid: tuple = forest.DEFAULT_FEAT_GRID
    # schemes
    run_s3: bool = True
    run_s4: bool = True
    # seeds
    seed: int = 0

    @classmethod
    def from_ini(cls, path: str | Path) -> "SiteConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file: {path}")
        cfg = cls()
        base = Path(path).resolve().parent

        def resolve(p: str) -> str:
            return str((base / p).resolve()) if p else ""

        sections = {
            "paths": {
                "buildings", "streets", "waterlines", "waterbodies",
                "study_area", "reference", "imagery", "embeddings", "out",
            },
            "ingest": {
                "max_building_area", "simplify_tol", "merge_overlap_frac",
                "small_building_area", "snap_tol", "skip_simplify",
            },
            "tessellation": {"segment_len", "shrink"},
            "context": {"context_steps"},
            "evaluation": {"n_folds"},
            "fusion": {"patch_size_m", "patch_step_m", "top_k"},
            "forest": {"weighting", "n_trees", "depth_grid", "feat_grid"},
            "schemes": {"run_s3", "run_s4"},
            "seeds": {"seed"},
        }
        for section in parser.sections():
            if section not in sections:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in sections[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                current = getattr(cfg, key)
                try:
                    if section == "paths":
                        value = resolve(raw)
                    elif isinstance(current, bool):
                        value = parser.getboolean(section, key)
                    elif isinstance(current, int):
                        value = int(raw)
                    elif isinstance(current, float):
                        value = float(raw)
                    elif isinstance(current, tuple):
                        value = tuple(
                            None if t.strip().lower() == "none" else _grid_token(t)
                            for t in raw.split(",") if t.strip()
                        )
                    else:
                        value = raw
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"bad value for [{section}] {key}: {raw}") from exc
                setattr(cfg, key, value)
        if cfg.weighting not in ("uniform", "inverse_frequency", "best"):
            raise ConfigError(f"unknown weighting: {cfg.weighting}")
        return cfg

    def hash(self) -> str:
        doc = json.dumps(self.__dict__, sort_keys=True, default=str)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def check_paths(self) -> None:
        for key in ("buildings", "streets", "study_area", "reference"):
            p = getattr(self, key)
            if not p:
                raise ConfigError(f"missing required path: {key}")
            if not Path(p).exists():
                raise ConfigError(f"{key} path does not exist: {p}")
        for key in ("waterlines", "waterbodies", "imagery", "embeddings"):
            p = getattr(self, key)
            if p and not Path(p).exists():
                raise ConfigError(f"{key} path does not exist: {p}")


def _grid_token(t: str):
    t = t.strip()
    try:
        return int(t)
    except ValueError:
        return t


def _sha_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Pipeline:
    """Runs the stage chain with content-hash caching per stage."""

    STAGES = (
        "ingest", "tessellate", "metrics", "context", "folds",
        "s1", "rasterize", "s3", "s4", "maps",
    )

    def __init__(self, config: SiteConfig):
        self.cfg = config
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache_path = self.out / "cache.json"
        self.cache = {}
        if self.cache_path.exists():
            self.cache = json.loads(self.cache_path.read_text())
        self.skipped: list[str] = []

    # -- cache plumbing -----------------------------------------------------

    def _stage_key(self, stage: str, inputs: list[Path]) -> str:
        h = hashlib.sha256()
        h.update(self.cfg.hash().encode())
        h.update(stage.encode())
        for p in inputs:
            h.update(str(p.name).encode())
            h.update(_sha_file(p).encode())
        return h.hexdigest()

    def _fresh(self, stage: str, key: str, outputs: list[Path]) -> bool:
        return self.cache.get(stage) == key and all(p.exists() for p in outputs)

    def _mark(self, stage: str, key: str) -> None:
        self.cache[stage] = key
        self.cache_path.write_text(json.dumps(self.cache, indent=1))

    def _manifest(self, stage: str, payload: dict) -> None:
        doc = {"stage": stage, "config_hash": self.cfg.hash(), "seed": self.cfg.seed}
        doc.update(payload)
        with open(self.out / stage / "manifest.json", "w") as fh:
            json.dump(doc, fh, indent=1)

    def _dir(self, stage: str) -> Path:
        d = self.out / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    # -- stage implementations ----------------------------------------------

    def run(self, stages=None) -> None:
        self.cfg.check_paths()
        for stage in stages or self.STAGES:
            method = getattr(self, f"stage_{stage}")
            try:
                method()
            except (ConfigError, StageError):
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc

    def stage_ingest(self) -> None:
        cfg = self.cfg
        inputs = [Path(cfg.buildings), Path(cfg.streets), Path(cfg.study_area)]
        for opt in (cfg.waterlines, cfg.waterbodies):
            if opt:
                inputs.append(Path(opt))
        d = self._dir("ingest")
        outputs = [d / "buildings.geojson", d / "streets.geojson", d / "report.json"]
        key = self._stage_key("ingest", inputs)
        if self._fresh("ingest", key, outputs):
            self.skipped.append("ingest")
            return

        icfg = ingest.IngestConfig(
            max_building_area=cfg.max_building_area,
            simplify_tol=cfg.simplify_tol,
            merge_overlap_frac=cfg.merge_overlap_frac,
            small_building_area=cfg.small_building_area,
            snap_tol=cfg.snap_tol,
            skip_simplify=cfg.skip_simplify,
        )
        raw_b = ingest.load_layer(cfg.buildings, "buildings")
        raw_s = ingest.load_layer(cfg.streets, "streets")
        waterlines, waterbodies = [], []
        if cfg.waterlines:
            waterlines = list(ingest.load_layer(cfg.waterlines, "waterlines").geometries)
        if cfg.waterbodies:
            waterbodies = list(ingest.load_layer(cfg.waterbodies, "waterbodies").geometries)

        buildings, rep_b = ingest.preprocess_buildings(raw_b, icfg)
        network, rep_s = ingest.preprocess_streets(raw_s, icfg)
        buildings, waterlines, rep_c = ingest.consistency_check(
            buildings, network, waterlines, waterbodies
        )
        crs = raw_b.crs
        write_vector(outputs[0], FeatureCollection(
            ids=[b.id for b in buildings],
            geometries=[b.footprint for b in buildings],
            properties=[{} for _ in buildings], crs=crs,
        ))
        write_vector(outputs[1], FeatureCollection(
            ids=[s.id for s in network.segments],
            geometries=[s.line for s in network.segments],
            properties=[{} for _ in network.segments], crs=crs,
        ))
        if waterlines:
            write_vector(d / "waterlines.geojson", FeatureCollection(
                ids=list(range(len(waterlines))), geometries=waterlines,
                properties=[{} for _ in waterlines], crs=crs,
            ))
        if waterbodies:
            write_vector(d / "waterbodies.geojson", FeatureCollection(
                ids=list(range(len(waterbodies))), geometries=waterbodies,
                properties=[{} for _ in waterbodies], crs=crs,
            ))
        with open(outputs[2], "w") as fh:
            json.dump({
                "buildings": rep_b.as_dict(),
                "streets": rep_s.as_dict(),
                "consistency": rep_c.as_dict(),
            }, fh, indent=1)
        self._manifest("ingest", {"n_buildings": len(buildings), "n_segments": len(network)})
        self._mark("ingest", key)

    # loaders for downstream stages

    def _load_buildings(self) -> list[Building]:
        fc = read_vector(self.out / "ingest" / "buildings.geojson")
        return [Building(id=i, footprint=g) for i, g in zip(fc.ids, fc.geometries)]

    def _load_network(self):
        from .network import StreetNetwork
        from .types import StreetSegment
        fc = read_vector(self.out / "ingest" / "streets.geojson")
        segments = [StreetSegment(id=i, line=g) for i, g in zip(fc.ids, fc.geometries)]
        return StreetNetwork(segments=segments, snap_tol=self.cfg.snap_tol)

    def _load_cells(self) -> list[EtcCell]:
        fc = read_vector(self.out / "tessellation" / "cells.geojson")
        cells = []
        for i, g, p in zip(fc.ids, fc.geometries, fc.properties):
            cells.append(EtcCell(
                id=i, polygon=g, building_id=p["building_id"],
                enclosure_id=p["enclosure_id"],
                nearest_street_id=p.get("nearest_street_id"),
                nearest_node_id=p.get("nearest_node_id"),
                nearest_edge_id=p.get("nearest_edge_id"),
            ))
        return cells

    def _load_reference(self) -> list[ev.ReferencePolygon]:
        fc = read_vector(self.out / "folds" / "reference.geojson")
        return [
            ev.ReferencePolygon(id=i, polygon=g, lcz=int(p["lcz"]),
                                weight_etc=float(p.get("weight_etc", 0.0)))
            for i, g, p in zip(fc.ids, fc.geometries, fc.properties)
        ]

    def _load_fold_assignment(self, kind: str) -> ev.FoldAssignment:
        doc = json.loads((self.out / "folds" / f"folds_{kind}.json").read_text())
        return ev.FoldAssignment(
            folds={int(k): v for k, v in doc["folds"].items()}, kind=doc["kind"]
        )

    def stage_tessellate(self) -> None:
        d = self._dir("tessellation")
        inputs = [self.out / "ingest" / "buildings.geojson",
                  self.out / "ingest" / "streets.geojson", Path(self.cfg.study_area)]
        outputs = [d / "enclosures.geojson", d / "cells.geojson"]
        key = self._stage_key("tessellate", inputs)
        if self._fresh("tessellate", key, outputs):
            self.skipped.append("tessellate")
            return
        buildings = self._load_buildings()
        network = self._load_network()
        study_fc = read_vector(self.cfg.study_area)
        study = shapely.union_all(study_fc.geometries)
        waterlines, waterbodies = [], []
        wl = self.out / "ingest" / "waterlines.geojson"
        wb = self.out / "ingest" / "waterbodies.geojson"
        if wl.exists():
            waterlines = list(read_vector(wl).geometries)
        if wb.exists():
            waterbodies = list(read_vector(wb).geometries)
        enclosures = tessellation.build_enclosures(network, waterlines, waterbodies, study)
        cells = tessellation.tessellate(
            buildings, enclosures, segment_len=self.cfg.segment_len, shrink=self.cfg.shrink
        )
        cells = tessellation.link_elements(cells, buildings, network)
        write_vector(outputs[0], FeatureCollection(
            ids=[e.id for e in enclosures], geometries=[e.polygon for e in enclosures],
            properties=[{} for _ in enclosures], crs=study_fc.crs,
        ))
        write_vector(outputs[1], FeatureCollection(
            ids=[c.id for c in cells], geometries=[c.polygon for c in cells],
            properties=[{
                "building_id": c.building_id, "enclosure_id": c.enclosure_id,
                "nearest_street_id": c.nearest_street_id,
                "nearest_node_id": c.nearest_node_id,
                "nearest_edge_id": c.nearest_edge_id,
            } for c in cells], crs=study_fc.crs,
        ))
        self._manifest("tessellation", {"n_enclosures": len(enclosures), "n_cells": len(cells)})
        self._mark("tessellate", key)

    def stage_metrics(self) -> None:
        d = self._dir("metrics")
        inputs = [self.out / "tessellation" / "cells.geojson"]
        outputs = [d / "primary.csv", d / "catalog.json"]
        key = self._stage_key("metrics", inputs)
        if self._fresh("metrics", key, outputs):
            self.skipped.append("metrics")
            return
        pm = assemble_primary(self._load_cells(), self._load_buildings(), self._load_network())
        pm.to_csv(outputs[0])
        write_catalog_json(outputs[1])
        self._manifest("metrics", {"shape": list(pm.values.shape)})
        self._mark("metrics", key)

    def stage_context(self) -> None:
        d = self._dir("context")
        inputs = [self.out / "metrics" / "primary.csv"]
        outputs = [d / "context.csv"]
        key = self._stage_key("context", inputs)
        if self._fresh("context", key, outputs):
            self.skipped.append("context")
            return
        pm = PrimaryMatrix.from_csv(inputs[0])
        cells = self._load_cells()
        graph = build_contiguity([c.polygon for c in cells])
        ctx = contextualize(pm.values, graph, steps=self.cfg.context_steps)
        guard_contextual_width(ctx)
        table = fusion.FeatureTable(keys=pm.cell_ids, names=contextual_names(), values=ctx)
        table.to_csv(outputs[0], key_name="cell_id")
        self._manifest("context", {"shape": list(ctx.shape)})
        self._mark("context", key)

    def stage_folds(self) -> None:
        d = self._dir("folds")
        inputs = [Path(self.cfg.reference), self.out / "tessellation" / "cells.geojson"]
        outputs = [d / "reference.geojson", d / "folds_etc_count.json",
                   d / "folds_area.json", d / "labels.csv"]
        key = self._stage_key("folds", inputs)
        if self._fresh("folds", key, outputs):
            self.skipped.append("folds")
            return
        fc = read_vector(self.cfg.reference)
        reference = [
            ev.ReferencePolygon(id=i, polygon=g, lcz=ev.parse_class(p["lcz"]))
            for i, g, p in zip(fc.ids, fc.geometries, fc.properties)
        ]
        reference = ev.split_singletons(reference)
        cells = self._load_cells()
        buildings = self._load_buildings()
        ev.count_etcs_per_polygon(reference, cells, buildings)
        assignments = {}
        for kind in ("etc_count", "area"):
            fa = ev.stratified_folds(reference, kind=kind, k=self.cfg.n_folds,
                                     seed=self.cfg.seed)
            assignments[kind] = fa
            with open(d / f"folds_{kind}.json", "w") as fh:
                json.dump({"kind": kind, "folds": fa.folds,
                           "config_hash": self.cfg.hash(), "seed": self.cfg.seed}, fh, indent=1)
        write_vector(outputs[0], FeatureCollection(
            ids=[rp.id for rp in reference], geometries=[rp.polygon for rp in reference],
            properties=[{
                "lcz": rp.lcz, "weight_etc": rp.weight_etc,
                "fold_etc_count": assignments["etc_count"].fold_of(rp.id),
                "fold_area": assignments["area"].fold_of(rp.id),
            } for rp in reference], crs=fc.crs,
        ))
        labels = ev.label_etcs(cells, buildings, reference, assignments["etc_count"])
        with open(outputs[3], "w") as fh:
            fh.write("cell_id,lcz,fold\n")
            for cid in sorted(labels):
                lcz, fold = labels[cid]
                fh.write(f"{cid},{lcz},{fold}\n")
        self._manifest("folds", {"n_reference": len(reference), "n_labeled": len(labels)})
        self._mark("folds", key)

    def _read_labels(self) -> dict[int, tuple[int, int]]:
        out = {}
        for line in (self.out / "folds" / "labels.csv").read_text().splitlines()[1:]:
            cid, lcz, fold = line.split(",")
            out[int(cid)] = (int(lcz), int(fold))
        return out

    def _fit_fold(self, Xtr, ytr, Xte, yte, seed: int):
        """Tune on one fold; with weighting="best" both strategies compete on
        combined weighted-F1 + urban-F1."""
        cfg = self.cfg
        if cfg.weighting == "best":
            candidates = ("uniform", "inverse_frequency")
        else:
            candidates = (cfg.weighting,)
        best = None
        for w in candidates:
            model, rep = forest.tune(
                Xtr, ytr, Xte, yte, weighting=w, depth_grid=cfg.depth_grid,
                feat_grid=cfg.feat_grid, n_trees=cfg.n_trees, seed=seed,
            )
            pred = model.predict(Xte)
            fs = ev.scores(yte, pred)
            combined = fs.f1_weighted + (0.0 if np.isnan(fs.f1_urban) else fs.f1_urban)
            if best is None or combined > best[0] + 1e-12:
                entry = {"weighting": w, **rep.chosen, "rule": rep.rule}
                best = (combined, model, entry, fs, pred)
        return best[1:]

    def _cross_validate(self, table: fusion.FeatureTable, labels: dict, seed_base: int):
        """Per-fold tuning and scoring over labeled rows of `table`."""
        cfg = self.cfg
        keyed = [(i, labels[k]) for i, k in enumerate(table.keys) if k in labels]
        rows = np.array([i for i, _ in keyed])
        y = np.array([lab for _, (lab, _) in keyed])
        fold = np.array([f for _, (_, f) in keyed])
        per_fold, tuning, predictions = [], [], {}
        for k in range(cfg.n_folds):
            tr, te = rows[fold != k], rows[fold == k]
            if len(te) == 0 or len(np.unique(y[fold != k])) < 2:
                continue
            Xtr, Xte = forest.impute_median(table.values[tr], table.values[te])
            model, entry, fs, pred = self._fit_fold(
                Xtr, y[fold != k], Xte, y[fold == k], seed_base + k
            )
            per_fold.append(fs)
            tuning.append({"fold": k, **entry})
            for r, p in zip(te, pred):
                predictions[table.keys[int(r)]] = int(p)
        return per_fold, tuning, predictions

    def stage_s1(self) -> None:
        d = self._dir("s1")
        inputs = [self.out / "context" / "context.csv", self.out / "folds" / "labels.csv"]
        outputs = [d / "report.json", d / "top20.json", d / "predictions.csv"]
        key = self._stage_key("s1", inputs)
        if self._fresh("s1", key, outputs):
            self.skipped.append("s1")
            return
        cfg = self.cfg
        table = fusion.FeatureTable.from_csv(inputs[0])
        labels = self._read_labels()
        per_fold, tuning, predictions = self._cross_validate(table, labels, cfg.seed)
        report = ev.aggregate_report(per_fold)
        doc = report.as_dict()
        doc.update({"scheme": "s1", "tuning": tuning,
                    "config_hash": cfg.hash(), "seed": cfg.seed})
        with open(outputs[0], "w") as fh:
            json.dump(doc, fh, indent=1)

        # Importance ranking from a model over all labeled rows.
        keyed = [(i, labels[k][0]) for i, k in enumerate(table.keys) if k in labels]
        rows = np.array([i for i, _ in keyed])
        y_all = np.array([lab for _, lab in keyed])
        X_all = forest.impute_median(table.values[rows])
        # Importance comes from the best-performing fold's weighting choice.
        if tuning:
            best_fold = max(
                range(len(per_fold)),
                key=lambda i: per_fold[i].f1_weighted
                + (0.0 if np.isnan(per_fold[i].f1_urban) else per_fold[i].f1_urban),
            )
            full_weighting = tuning[best_fold]["weighting"]
        else:
            full_weighting = "uniform"
        full = forest.train(X_all, y_all, weighting=full_weighting,
                            n_trees=cfg.n_trees, max_depth=None,
                            max_features="sqrt", seed=cfg.seed)
        ranking = forest.importance(full)
        top = forest.top_k(ranking, cfg.top_k)
        with open(outputs[1], "w") as fh:
            json.dump({
                "config_hash": cfg.hash(), "seed": cfg.seed,
                "importance": [
                    {"name": table.names[i], "score": s} for i, s in ranking
                ],
                "top": [table.names[i] for i in top],
            }, fh, indent=1)
        with open(outputs[2], "w") as fh:
            fh.write("cell_id,lcz\n")
            for cid in sorted(predictions):
                fh.write(f"{cid},{predictions[cid]}\n")
        self._manifest("s1", {"oa": doc["averaged"]["oa"]})
        self._mark("s1", key)

    def stage_rasterize(self) -> None:
        if not self.cfg.imagery:
            self.skipped.append("rasterize")
            return
        d = self._dir("rasterize")
        inputs = [self.out / "s1" / "top20.json", self.out / "context" / "context.csv",
                  Path(self.cfg.imagery)]
        outputs = [d / "morpho.tif"]
        key = self._stage_key("rasterize", inputs)
        if self._fresh("rasterize", key, outputs):
            self.skipped.append("rasterize")
            return
        top = json.loads(inputs[0].read_text())["top"]
        table = fusion.FeatureTable.from_csv(inputs[1])
        imagery = read_geotiff(self.cfg.imagery)
        cells = self._load_cells()
        raster = fusion.rasterize_attributes(
            cells, top, table.names, table.values, imagery.geometry
        )
        write_geotiff(outputs[0], raster)
        self._manifest("rasterize", {"bands": raster.band_names})
        self._mark("rasterize", key)

    def stage_s3(self) -> None:
        if not (self.cfg.run_s3 and self.cfg.imagery):
            self.skipped.append("s3")
            return
        d = self._dir("s3")
        inputs = [self.out / "rasterize" / "morpho.tif", Path(self.cfg.imagery),
                  self.out / "folds" / "reference.geojson"]
        outputs = [d / "report.json", d / "features.csv"]
        key = self._stage_key("s3", inputs)
        if self._fresh("s3", key, outputs):
            self.skipped.append("s3")
            return
        cfg = self.cfg
        imagery = read_geotiff(cfg.imagery)
        morpho = read_geotiff(inputs[0])
        stack = Raster(
            geometry=imagery.geometry,
            data=np.concatenate([imagery.data, morpho.data]),
            band_names=imagery.band_names + morpho.band_names,
        )
        grid100 = fusion.coarsen_grid(imagery.geometry, int(round(100.0 / imagery.geometry.pixel_size)))
        table = fusion.zonal_s3(stack, grid100)
        table.to_csv(outputs[1], key_name="cell100_id")
        reference = self._load_reference()
        folds = self._load_fold_assignment("area")
        labels = fusion.label_grid_cells(grid100, reference, folds)
        per_fold, tuning, _ = self._cross_validate(table, labels, cfg.seed + 100)
        report = ev.aggregate_report(per_fold)
        doc = report.as_dict()
        doc.update({"scheme": "s3", "tuning": tuning,
                    "config_hash": cfg.hash(), "seed": cfg.seed})
        with open(outputs[0], "w") as fh:
            json.dump(doc, fh, indent=1)
        self._manifest("s3", {"oa": doc["averaged"]["oa"], "n_columns": len(table.names)})
        self._mark("s3", key)

    def stage_s4(self) -> None:
        cfg = self.cfg
        if not (cfg.run_s4 and cfg.imagery and cfg.embeddings
                and Path(cfg.embeddings).exists()):
            logger.info("s4 skipped: no embeddings directory configured")
            self.skipped.append("s4")
            return
        emb_files = sorted(Path(cfg.embeddings).glob("fold_*.csv"))
        if not emb_files:
            logger.info("s4 skipped: no fold_*.csv embedding tables in %s", cfg.embeddings)
            self.skipped.append("s4")
            return
        d = self._dir("s4")
        inputs = [self.out / "rasterize" / "morpho.tif",
                  self.out / "folds" / "reference.geojson"] + emb_files
        outputs = [d / "report.json"]
        key = self._stage_key("s4", inputs)
        if self._fresh("s4", key, outputs):
            self.skipped.append("s4")
            return
        morpho = read_geotiff(inputs[0])
        reference = self._load_reference()
        folds = self._load_fold_assignment("area")
        patches = fusion.make_patches(
            morpho.geometry, reference, size_m=cfg.patch_size_m, step_m=cfg.patch_step_m
        )
        stats = fusion.patch_stats(morpho, patches)
        cell_labels = fusion.label_grid_cells(patches.grid100, reference, folds)
        labels = {p.id: cell_labels[p.id] for p in patches.patches if p.id in cell_labels}

        per_fold, tuning = [], []
        for path in emb_files:
            emb = fusion.read_embedding_table(path)
            k = emb.fold
            table = fusion.assemble_s4(emb, stats)
            keyed = [(i, labels[pid]) for i, pid in enumerate(table.keys) if pid in labels]
            rows = np.array([i for i, _ in keyed])
            y = np.array([lab for _, (lab, _) in keyed])
            fold = np.array([f for _, (_, f) in keyed])
            tr, te = rows[fold != k], rows[fold == k]
            if len(te) == 0 or len(np.unique(y[fold != k])) < 2:
                continue
            Xtr, Xte = forest.impute_median(table.values[tr], table.values[te])
            model, entry, fs, _ = self._fit_fold(
                Xtr, y[fold != k], Xte, y[fold == k], cfg.seed + 200 + k
            )
            per_fold.append(fs)
            tuning.append({"fold": k, **entry})
        report = ev.aggregate_report(per_fold)
        doc = report.as_dict()
        doc.update({"scheme": "s4", "tuning": tuning,
                    "config_hash": cfg.hash(), "seed": cfg.seed})
        with open(outputs[0], "w") as fh:
            json.dump(doc, fh, indent=1)
        self._manifest("s4", {"oa": doc["averaged"]["oa"], "n_folds": len(per_fold)})
        self._mark("s4", key)

    def stage_maps(self) -> None:
        d = self._dir("maps")
        inputs = [self.out / "s1" / "predictions.csv",
                  self.out / "tessellation" / "cells.geojson"]
        key = self._stage_key("maps", inputs)
        outputs = [d / "s1_cells.geojson"]
        if self._fresh("maps", key, outputs):
            self.skipped.append("maps")
            return
        predictions = {}
        for line in inputs[0].read_text().splitlines()[1:]:
            cid, lcz = line.split(",")
            predictions[int(cid)] = int(lcz)
        cells = self._load_cells()
        ev.emit_map(predictions, d, "s1_cells", cells=cells)
        if self.cfg.imagery:
            imagery = read_geotiff(self.cfg.imagery)
            grid100 = fusion.coarsen_grid(
                imagery.geometry, int(round(100.0 / imagery.geometry.pixel_size))
            )
            grid_labels = ev.s1_to_grid(predictions, cells, grid100)
            ev.emit_map(grid_labels, d, "s1_grid", grid=grid100)
        self._manifest("maps", {"n_labeled_cells": len(predictions)})
        self._mark("maps", key)


def run_pipeline(config: SiteConfig, stages=None) -> Pipeline:
    pipe = Pipeline(config)
    pipe.run(stages)
    return pipe
