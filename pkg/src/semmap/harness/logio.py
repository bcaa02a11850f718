"""Line-delimited JSON sensor logs.

The first line is a header object; every following line is one frame::

    {"format": "semmap-log", "version": 1, "catalog": {...}, "feature_dim": 16,
     "scan": {...}, "world": {...} | null}
    {"t": 0.0, "pose": [x, y, theta], "ranges": [...], "likelihood": [...],
     "feature": [...] | null, "true_label": "office" | null, "env": null}

No-return beams are written as ``null``.  Floats use Python's shortest
round-trip repr, so write-then-read is exact.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .._io import atomic_write
from ..catalog import ClassCatalog
from ..semantic_grid import LaserScan, Pose2D
from ..simulator import FrameRecord, ScanParams

LOG_FORMAT = "semmap-log"
LOG_VERSION = 1


class LogError(ValueError):
    pass


@dataclass
class LogHeader:
    catalog: ClassCatalog
    scan: ScanParams
    feature_dim: int | None = None
    world: dict | None = None

    def to_dict(self) -> dict:
        return {"format": LOG_FORMAT, "version": LOG_VERSION,
                "catalog": self.catalog.to_dict(), "feature_dim": self.feature_dim,
                "scan": self.scan.to_dict(), "world": self.world}


def _frame_dict(fr: FrameRecord, catalog: ClassCatalog) -> dict:
    return {
        "t": float(fr.t),
        "pose": [fr.pose.x, fr.pose.y, fr.pose.theta],
        "ranges": [None if not math.isfinite(r) else r for r in fr.scan.ranges.tolist()],
        "likelihood": np.asarray(fr.base_likelihood, dtype=float).tolist(),
        "feature": None if fr.feature is None else np.asarray(fr.feature, dtype=float).tolist(),
        "true_label": None if fr.true_label is None else catalog.name(fr.true_label),
        "env": fr.env,
    }


def dumps_log(header: LogHeader, frames) -> str:
    buf = io.StringIO()
    buf.write(json.dumps(header.to_dict(), sort_keys=True) + "\n")
    for fr in frames:
        buf.write(json.dumps(_frame_dict(fr, header.catalog), sort_keys=True) + "\n")
    return buf.getvalue()


def write_log(path, header: LogHeader, frames) -> None:
    atomic_write(path, dumps_log(header, frames))


def _parse_header(line: str, path) -> LogHeader:
    try:
        d = json.loads(line)
    except json.JSONDecodeError:
        d = None
    if not isinstance(d, dict) or d.get("format") != LOG_FORMAT:
        raise LogError(f"{path}:1: missing '{LOG_FORMAT}' header")
    if d.get("version") != LOG_VERSION:
        raise LogError(f"{path}:1: unsupported log version {d.get('version')!r}")
    try:
        return LogHeader(ClassCatalog.from_dict(d["catalog"]), ScanParams.from_dict(d["scan"]),
                         d.get("feature_dim"), d.get("world"))
    except (KeyError, TypeError, ValueError) as exc:
        raise LogError(f"{path}:1: malformed header ({exc})") from None


def _parse_frame(d: dict, header: LogHeader, where: str) -> FrameRecord:
    try:
        x, y, th = d["pose"]
        ranges = np.array([math.inf if r is None else r for r in d["ranges"]], dtype=float)
        sp = header.scan
        if ranges.size != sp.n_beams:
            raise LogError(f"{where}: expected {sp.n_beams} ranges, got {ranges.size}")
        lik = np.array(d["likelihood"], dtype=float)
        if lik.size != header.catalog.n_base:
            raise LogError(f"{where}: likelihood has {lik.size} entries, "
                           f"catalog has {header.catalog.n_base} base labels")
        feat = d.get("feature")
        if feat is not None:
            feat = np.array(feat, dtype=float)
            if header.feature_dim is not None and feat.size != header.feature_dim:
                raise LogError(f"{where}: feature has {feat.size} entries, "
                               f"expected {header.feature_dim}")
        truth = d.get("true_label")
        truth = None if truth is None else header.catalog.index(truth)
        return FrameRecord(float(d["t"]), Pose2D(float(x), float(y), float(th)),
                           LaserScan(sp.angle_min, sp.angle_increment, ranges, sp.range_max),
                           lik, feat, truth, d.get("env"))
    except LogError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise LogError(f"{where}: malformed record ({exc})") from None


def iter_log(path) -> tuple[LogHeader, Iterator[FrameRecord]]:
    """Open a log; returns the header and a lazy frame iterator."""
    fh = open(path)
    try:
        header = _parse_header(fh.readline(), path)
    except BaseException:
        fh.close()
        raise

    def frames():
        last_t = -math.inf
        with fh:
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                where = f"{path}:{lineno}"
                try:
                    d = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise LogError(f"{where}: not valid JSON ({exc.msg})") from None
                fr = _parse_frame(d, header, where)
                if fr.t < last_t:
                    raise LogError(f"{where}: timestamp {fr.t} is earlier than {last_t}")
                last_t = fr.t
                yield fr

    return header, frames()


def ingest_log(path) -> tuple[LogHeader, list[FrameRecord]]:
    header, frames = iter_log(path)
    return header, list(frames)
