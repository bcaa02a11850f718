"""End-to-end runs: frames -> likelihood fusion -> filter -> semantic map."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from ..bayes_filter import InconsistentEvidence, PlaceFilter, ml_label
from ..catalog import ClassCatalog
from ..expansion import (OneVsAllModel, TrainingConfig, expanded_likelihood, load_training_set,
                         train_one_vs_all)
from ..semantic_grid import SemanticGridMap, dump_bytes, legend_text, new_map, ppm_bytes, \
    render_rgb, update_semantic, winning_label_render
from ..simulator import (ClassifierNoiseModel, FeatureModel, FrameRecord, World, drive,
                         generate_world, simulate_stream)
from .._io import atomic_write
from .config import ConfigError, RunConfig, prior_from_config
from .logio import LogHeader, write_log
from .metrics import BeliefTrace, RunMetrics, compute_metrics

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class RunResult:
    metrics: RunMetrics
    map: SemanticGridMap
    trace: BeliefTrace
    catalog: ClassCatalog
    world: World | None = None


def build_world(cfg: RunConfig, catalog: ClassCatalog) -> World:
    if cfg.world is None:
        raise ConfigError("simulation needs a 'world' section")
    return generate_world(cfg.world, catalog)


def noise_model(cfg: RunConfig, catalog: ClassCatalog) -> ClassifierNoiseModel:
    n = dict(cfg.noise)
    allowed = None
    if cfg.whitelist is not None:
        allowed = [catalog.index(x) for x in cfg.whitelist if catalog.index(x) < catalog.n_base]
    confusion = n.get("confusion")
    return ClassifierNoiseModel(catalog.n_base, float(n.get("accuracy", 0.75)),
                                float(n.get("peak_mass", 0.7)), allowed,
                                None if confusion is None else np.asarray(confusion, dtype=float),
                                seed=int(n.get("seed", cfg.seed)))


def feature_model(cfg: RunConfig, catalog: ClassCatalog) -> FeatureModel | None:
    if not cfg.feature_dim:
        return None
    return FeatureModel(int(cfg.feature_dim), len(catalog), cfg.feature_scale, seed=cfg.seed)


def simulate_frames(cfg: RunConfig, catalog: ClassCatalog | None = None):
    """Frames for ``cfg`` plus the world they were generated in."""
    catalog = catalog or cfg.validate()
    world = build_world(cfg, catalog)
    if not cfg.waypoints:
        raise ConfigError("simulation needs trajectory waypoints")
    poses = drive(world, cfg.waypoints, cfg.speed, cfg.dt)
    frames = simulate_stream(world, poses, noise_model(cfg, catalog), cfg.scan,
                             feature_model(cfg, catalog), cfg.dt, cfg.n_frames)
    return frames, world


def log_header(cfg: RunConfig, catalog: ClassCatalog) -> LogHeader:
    world = None
    if cfg.world is not None:
        world = {"grid": cfg.world.geometry.to_dict(), **cfg.world.to_dict()}
    return LogHeader(catalog, cfg.scan, cfg.feature_dim, world)


def load_models(cfg: RunConfig, catalog: ClassCatalog,
                models: dict[str, OneVsAllModel] | None = None) -> list[OneVsAllModel]:
    """One scorer per expansion label, loaded, trained from a feature file, or given."""
    models = dict(models or {})
    out = []
    for e in cfg.expansion:
        name = e["name"]
        idx = catalog.index(name)
        if name in models:
            mdl = models[name]
        elif e.get("model"):
            mdl = OneVsAllModel.load(cfg.resolve(e["model"]))
        elif e.get("features"):
            data = load_training_set(cfg.resolve(e["features"]))
            mdl = train_one_vs_all(data, idx, TrainingConfig(seed=cfg.seed), catalog)
        else:
            raise ConfigError(f"expansion label {name!r} has neither a model nor a feature file")
        if mdl.target_label != idx:
            raise ConfigError(f"model for {name!r} targets label index {mdl.target_label}, "
                              f"catalog has it at {idx}")
        out.append(mdl)
    return out


def run_frames(cfg: RunConfig, catalog: ClassCatalog, frames: Iterable[FrameRecord],
               models: list[OneVsAllModel] = (), world: World | None = None) -> RunResult:
    prior = prior_from_config(cfg, catalog)
    filt = PlaceFilter(catalog, prior, cfg.filter)
    geometry = cfg.grid if cfg.grid is not None else (world.geometry if world else None)
    if geometry is None:
        raise ConfigError("config needs a 'grid' section")
    smap = new_map(geometry, catalog, cfg.clamp, cfg.cell_prior)
    n_exp = len(catalog) - catalog.n_base

    ts, mls, maps, posts, truth, envs = [], [], [], [], [], []
    for i, fr in enumerate(frames):
        try:
            lik = expanded_likelihood(fr.base_likelihood, models, fr.feature, n_exp)
            belief = filt.update(lik, frame=i)
            update_semantic(smap, fr.pose, fr.scan, cfg.gate, belief)
        except InconsistentEvidence:
            raise
        except (ValueError, IndexError) as exc:
            raise PipelineError(f"frame {i} (t={fr.t}): {exc}") from exc
        ts.append(fr.t)
        mls.append(ml_label(lik))
        maps.append(filt.map_label()[0])
        posts.append(belief)
        truth.append(fr.true_label)
        envs.append(fr.env)

    trace = BeliefTrace(list(catalog), np.array(ts, dtype=float), np.array(mls, dtype=np.int64),
                        np.array(maps, dtype=np.int64),
                        np.array(posts).reshape(len(ts), len(catalog)))
    if not ts:
        raise PipelineError("no frames to process")
    have_truth = any(v is not None for v in truth)
    use_envs = envs if any(e is not None for e in envs) else None
    metrics = compute_metrics(trace, truth if have_truth else None, smap, world,
                              use_envs, cfg.min_confidence)
    return RunResult(metrics, smap, trace, catalog, world)


def write_artifacts(result: RunResult, out_dir, min_confidence: float = 0.5) -> dict[str, Path]:
    """Write map dump, render + legend, belief trace and metrics.

    Everything is serialized in memory first and then renamed into place
    file by file, so a failed run never leaves a partial map dump.
    """
    out = Path(out_dir)
    render = winning_label_render(result.map, min_confidence)
    blobs = {
        "map.smap": dump_bytes(result.map),
        "map.ppm": ppm_bytes(render_rgb(render)),
        "map.ppm.legend": legend_text(result.map.labels).encode(),
        "trace.csv": result.trace.dumps().encode(),
        "metrics.json": result.metrics.to_json().encode(),
    }
    paths = {}
    for name, data in blobs.items():
        atomic_write(out / name, data)
        paths[name] = out / name
    return paths


def run_pipeline(cfg: RunConfig, frames: Iterable[FrameRecord] | None = None,
                 models: dict[str, OneVsAllModel] | None = None, write: bool = True,
                 catalog: ClassCatalog | None = None) -> RunResult:
    """Run one configuration end to end.

    Frames come from ``frames``, else from ``cfg.log``, else from the
    simulator.  Label references are checked before the first frame.
    """
    from .logio import iter_log

    catalog = catalog or cfg.validate()
    world = None
    if frames is None:
        if cfg.log is not None:
            header, frames = iter_log(cfg.log)
            if list(header.catalog.base_labels) != list(catalog.base_labels):
                raise ConfigError("log catalog does not match the config catalog")
        else:
            frames, world = simulate_frames(cfg, catalog)
    if world is None and cfg.world is not None:
        world = build_world(cfg, catalog)
    mdls = load_models(cfg, catalog, models)
    result = run_frames(cfg, catalog, frames, mdls, world)
    if write and cfg.output is not None:
        write_artifacts(result, cfg.output, cfg.min_confidence)
    return result


def simulate_to_log(cfg: RunConfig, path) -> list[FrameRecord]:
    catalog = cfg.validate()
    frames, _ = simulate_frames(cfg, catalog)
    write_log(path, log_header(cfg, catalog), frames)
    return frames
