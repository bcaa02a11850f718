"""Run metrics and belief traces."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .._io import atomic_write
from ..bayes_filter import count_switches
from ..semantic_grid import SemanticGridMap, winning_label_render

TRACE_FORMAT = "semmap-trace"


@dataclass
class BeliefTrace:
    labels: list[str]
    t: np.ndarray
    ml: np.ndarray
    map: np.ndarray
    posterior: np.ndarray  # (N, K)

    def __len__(self) -> int:
        return self.t.shape[0]

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"# format={TRACE_FORMAT} version=1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "ml_label", "map_label"] + [f"p:{n}" for n in self.labels])
        for i in range(len(self)):
            w.writerow([repr(float(self.t[i])), self.labels[self.ml[i]], self.labels[self.map[i]]]
                       + [repr(v) for v in self.posterior[i].tolist()])
        return buf.getvalue()

    def save(self, path) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path) -> "BeliefTrace":
        with open(path) as fh:
            first = fh.readline()
            if f"format={TRACE_FORMAT}" not in first or "version=1" not in first:
                raise ValueError(f"{path}: not a version-1 belief trace")
            rows = csv.reader(fh)
            cols = next(rows)
            labels = [c[2:] for c in cols[3:]]
            index = {n: i for i, n in enumerate(labels)}
            t, ml, mp, post = [], [], [], []
            for f in rows:
                if not f:
                    continue
                t.append(float(f[0]))
                ml.append(index[f[1]])
                mp.append(index[f[2]])
                post.append([float(v) for v in f[3:]])
        return cls(labels, np.array(t), np.array(ml, dtype=np.int64),
                   np.array(mp, dtype=np.int64), np.array(post).reshape(len(t), len(labels)))


@dataclass
class RunMetrics:
    n_frames: int
    ml_switches: int
    map_switches: int
    ml_accuracy: float | None = None
    map_accuracy: float | None = None
    map_cell_accuracy: float | None = None
    map_cells_labeled: int = 0
    per_environment: dict = field(default_factory=dict)
    weighted_ml_accuracy: float | None = None
    weighted_map_accuracy: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def weighted_average(values: Sequence[float], counts: Sequence[int]) -> float:
    v = np.asarray(values, dtype=float)
    c = np.asarray(counts, dtype=float)
    if v.shape != c.shape or c.sum() <= 0:
        raise ValueError("need matching values and a positive total count")
    return float((v * c).sum() / c.sum())


def map_cell_accuracy(m: SemanticGridMap, truth_labels: np.ndarray,
                      min_confidence: float = 0.5) -> tuple[float | None, int]:
    """Fraction of labeled free cells whose winning label matches ground truth."""
    render = winning_label_render(m, min_confidence)
    mask = (render >= 0) & (truth_labels >= 0)
    n = int(mask.sum())
    if n == 0:
        return None, 0
    return float(np.mean(render[mask] == truth_labels[mask])), n


def compute_metrics(trace: BeliefTrace, truth=None, m: SemanticGridMap | None = None,
                    world=None, envs: Sequence[str | None] | None = None,
                    min_confidence: float = 0.5) -> RunMetrics:
    """Accuracy and label-switch statistics of one run.

    Accuracies are exact counts over totals.  Per-environment figures are
    grouped by ``envs`` (one tag per frame; defaults to the true label) and
    the weighted averages weight each environment by its frame count.
    """
    n = len(trace)
    if n == 0:
        raise ValueError("empty trace")
    out = RunMetrics(n, count_switches(trace.ml), count_switches(trace.map))
    if truth is not None:
        truth = np.array([-1 if v is None else v for v in truth], dtype=np.int64)
        if truth.shape[0] != n:
            raise ValueError(f"trace has {n} frames, ground truth has {truth.shape[0]}")
        known = truth >= 0
        if known.any():
            out.ml_accuracy = float(np.mean(trace.ml[known] == truth[known]))
            out.map_accuracy = float(np.mean(trace.map[known] == truth[known]))
            if envs is None:
                tags = [trace.labels[v] if v >= 0 else None for v in truth]
            else:
                if len(envs) != n:
                    raise ValueError("environment tags do not match trace length")
                tags = list(envs)
            groups: dict[str, list[int]] = {}
            for i, tag in enumerate(tags):
                if tag is not None and known[i]:
                    groups.setdefault(tag, []).append(i)
            per = {}
            for tag in sorted(groups):
                idx = np.array(groups[tag])
                per[tag] = {"frames": int(idx.size),
                            "ml_accuracy": float(np.mean(trace.ml[idx] == truth[idx])),
                            "map_accuracy": float(np.mean(trace.map[idx] == truth[idx]))}
            out.per_environment = per
            counts = [v["frames"] for v in per.values()]
            out.weighted_ml_accuracy = weighted_average([v["ml_accuracy"] for v in per.values()], counts)
            out.weighted_map_accuracy = weighted_average([v["map_accuracy"] for v in per.values()], counts)
    if m is not None and world is not None:
        out.map_cell_accuracy, out.map_cells_labeled = map_cell_accuracy(m, world.labels, min_confidence)
    return out
