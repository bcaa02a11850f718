"""Semantic place mapping: simulate or replay runs, train new classes, plan, boost, render.

    semmap simulate    --config run.yaml --out DIR [--seed N] [--log PATH]
    semmap replay      --config run.yaml --log run.jsonl --out DIR
    semmap train-class --features door.csv --label door --config run.yaml --out door.model.json
    semmap plan        --map DIR/map.smap --costs day.yaml --start X Y --goal X Y [--out PREFIX]
    semmap boost       --likelihood patch.json --priors counts.csv --place kitchen --map DIR/map.smap
    semmap render      --map DIR/map.smap --out map.ppm
    semmap metrics     --trace DIR/trace.csv --log run.jsonl [--map DIR/map.smap]
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .._io import atomic_write
from ..catalog import ClassCatalog
from ..expansion import TrainingConfig, load_training_set, train_one_vs_all
from ..object_boost import boost, load_object_likelihood, load_prior_table, read_triples, top_k
from ..planner import CostTable, build_costmap, overlay_rgb, path_to_world, plan
from ..semantic_grid import (GridGeometry, export_render, load_map, ppm_bytes, render_rgb,
                             winning_label_render)
from ..simulator import WorldSpec, generate_world
from .config import load_config
from .logio import ingest_log, write_log
from .metrics import BeliefTrace, compute_metrics
from .pipeline import log_header, run_pipeline, simulate_frames

log = logging.getLogger("semmap")


def _abs(p):
    return None if p is None else str(Path(p).resolve())


def _config(args):
    overrides = {"seed": args.seed, "output": _abs(getattr(args, "out", None)),
                 "log": _abs(getattr(args, "log", None))}
    return load_config(args.config, overrides)


def cmd_simulate(args):
    cfg = _config(args)
    catalog = cfg.validate()
    frames, world = simulate_frames(cfg, catalog)
    log_path = Path(args.log) if args.log else Path(args.out) / "log.jsonl"
    write_log(log_path, log_header(cfg, catalog), frames)
    result = run_pipeline(cfg, frames=frames, catalog=catalog)
    print(result.metrics.to_json(), end="")
    return 0


def cmd_replay(args):
    cfg = _config(args)
    if cfg.log is None:
        raise SystemExit("replay needs --log or a 'log' entry in the config")
    result = run_pipeline(cfg)
    print(result.metrics.to_json(), end="")
    return 0


def cmd_train_class(args):
    data = load_training_set(args.features)
    if args.config:
        catalog = load_config(args.config).validate()
        if args.label not in catalog:
            catalog.append_label(args.label)
        target = catalog.index(args.label)
    elif args.index is not None:
        catalog, target = None, args.index
    else:
        raise SystemExit("train-class needs --config or --index to place the label")
    tcfg = TrainingConfig(args.learning_rate, args.l2, args.iterations, seed=args.seed or 0)
    model = train_one_vs_all(data, target, tcfg, catalog)
    model.target_name = args.label
    model.save(args.out)
    x = np.concatenate([data.positives, data.negatives])
    y = np.r_[np.ones(len(data.positives)), np.zeros(len(data.negatives))]
    acc = float(np.mean((model.predict_proba(x) > 0.5) == (y > 0)))
    print(json.dumps({"label": args.label, "index": target, "dim": model.dim,
                      "positives": model.n_pos, "negatives": model.n_neg,
                      "training_accuracy": acc}))
    return 0


def _world_to_cell(m, xy):
    cell = m.geometry.world_to_cell(float(xy[0]), float(xy[1]))
    if not m.geometry.in_bounds(*cell):
        raise SystemExit(f"point {tuple(xy)} is outside the map")
    return cell


def cmd_plan(args):
    m = load_map(args.map)
    table = CostTable.load(args.costs)
    field_ = build_costmap(m, table, args.min_confidence)
    res = plan(field_, _world_to_cell(m, args.start), _world_to_cell(m, args.goal))
    out = {"found": res.found, "total_cost": res.total_cost if res.found else None,
           "expanded_nodes": res.expanded_nodes, "cells": [list(c) for c in res.path],
           "path": [list(p) for p in path_to_world(m, res.path)]}
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        atomic_write(args.out + ".json", text)
        img = render_rgb(winning_label_render(m, args.min_confidence))
        atomic_write(args.out + ".ppm", ppm_bytes(overlay_rgb(img, res.path)))
    print(text, end="")
    return 0 if res.found else 2


def cmd_boost(args):
    names, lik = load_object_likelihood(args.likelihood)
    if args.map:
        places = load_map(args.map).labels
    elif args.config:
        places = list(load_config(args.config).validate())
    else:
        raise SystemExit("boost needs --map or --config for the place labels")
    place_map = dict(p.split("=", 1) for p in args.place_map or [])
    table = load_prior_table(read_triples(args.priors), names, places,
                             args.default_prior, place_map)
    place = ClassCatalog(places).index(args.place)
    post = boost(lik, table, place)
    k = min(args.k, len(names))
    before = [(names[i], p) for i, p in top_k(lik, k)]
    after = [(names[i], p) for i, p in top_k(post, k)]
    print(f"place: {args.place}")
    print(f"{'rank':>4}  {'before':<24}{'':>8}  {'after':<24}")
    for r, ((nb, pb), (na, pa)) in enumerate(zip(before, after), start=1):
        print(f"{r:>4}  {nb:<24}{pb:8.4f}  {na:<24}{pa:8.4f}")
    return 0


def cmd_render(args):
    m = load_map(args.map)
    export_render(m, args.out, args.min_confidence)
    print(f"wrote {args.out} and {args.out}.legend")
    return 0


def cmd_metrics(args):
    trace = BeliefTrace.load(args.trace)
    header, frames = ingest_log(args.log)
    if trace.labels[:len(header.catalog)] != list(header.catalog):
        raise ValueError("trace labels do not match the log catalog")
    truth = [f.true_label for f in frames]
    envs = [f.env for f in frames]
    m = load_map(args.map) if args.map else None
    world = None
    if m is not None and header.world is not None:
        spec = WorldSpec.from_dict(header.world, GridGeometry.from_dict(header.world["grid"]))
        world = generate_world(spec, header.catalog)
    metrics = compute_metrics(trace, truth, m, world,
                              envs if any(e is not None for e in envs) else None)
    text = metrics.to_json()
    if args.out:
        atomic_write(args.out, text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semmap", description=__doc__.split("\n")[0] or None,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a run, write its log and artifacts")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--log", help="log path (default OUT/log.jsonl)")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("replay", help="run the pipeline on a recorded log")
    s.add_argument("--config", required=True)
    s.add_argument("--log")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("train-class", help="train a one-vs-all scorer for a new class")
    s.add_argument("--features", required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config")
    s.add_argument("--index", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--learning-rate", type=float, default=0.1)
    s.add_argument("--l2", type=float, default=1e-3)
    s.add_argument("--iterations", type=int, default=500)
    s.set_defaults(func=cmd_train_class)

    s = sub.add_parser("plan", help="A* path on a saved map with a cost table")
    s.add_argument("--map", required=True)
    s.add_argument("--costs", required=True)
    s.add_argument("--start", nargs=2, type=float, required=True, metavar=("X", "Y"))
    s.add_argument("--goal", nargs=2, type=float, required=True, metavar=("X", "Y"))
    s.add_argument("--min-confidence", type=float, default=0.5)
    s.add_argument("--out", help="prefix for PREFIX.json and PREFIX.ppm overlay")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("boost", help="re-rank object hypotheses given a place label")
    s.add_argument("--likelihood", required=True)
    s.add_argument("--priors", required=True, help="object,place,count CSV")
    s.add_argument("--place", required=True)
    s.add_argument("--map")
    s.add_argument("--config")
    s.add_argument("--place-map", nargs="*", metavar="SCENE=LABEL")
    s.add_argument("--default-prior", type=float, default=1e-4)
    s.add_argument("-k", type=int, default=5)
    s.set_defaults(func=cmd_boost)

    s = sub.add_parser("render", help="winning-label image of a saved map")
    s.add_argument("--map", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-confidence", type=float, default=0.5)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("metrics", help="metrics from a belief trace and a log with ground truth")
    s.add_argument("--trace", required=True)
    s.add_argument("--log", required=True)
    s.add_argument("--map")
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"semmap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
