"""Place-conditioned re-ranking of object hypotheses.

An object classifier's distribution for an image patch is multiplied by how
likely each object is in the current (MAP) place and renormalized.  The
place-to-object table comes from co-occurrence counts; pairs that never
co-occur keep a small default probability so no object is ruled out.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .catalog import ClassCatalog

DEFAULT_PRIOR = 1e-4


class ObjectCatalog(ClassCatalog):
    """Ordered object class names.  Never expanded."""

    def append_label(self, name):
        raise TypeError("object catalogs are fixed")


def floor_column(col: np.ndarray, floor: float) -> np.ndarray:
    """Normalize ``col`` so it sums to 1 with every entry >= ``floor``.

    Entries that would fall under the floor are pinned to it and the rest
    share the remaining mass in proportion to their weights.
    """
    n = col.size
    if n * floor > 1.0 + 1e-12:
        raise ValueError(f"default prior {floor} is too large for {n} classes")
    w = np.asarray(col, dtype=float)
    if w.sum() <= 0:
        return np.full(n, 1.0 / n)
    pinned = np.zeros(n, dtype=bool)
    while True:
        free_mass = 1.0 - floor * pinned.sum()
        free_w = w[~pinned].sum()
        out = np.where(pinned, floor, 0.0)
        if free_w > 0:
            out[~pinned] = w[~pinned] / free_w * free_mass
        else:
            out[~pinned] = free_mass / max((~pinned).sum(), 1)
        low = ~pinned & (out < floor)
        if not low.any():
            return out
        pinned |= low


@dataclass
class ObjectPriorTable:
    """``values[c, x]`` is p(object c | place x); columns sum to one."""

    objects: ObjectCatalog
    places: ClassCatalog
    values: np.ndarray
    default_prior: float = DEFAULT_PRIOR

    def column(self, place: int) -> np.ndarray:
        return self.values[:, place]


def load_prior_table(source: Iterable[tuple[str, str, float]], objects: Sequence[str] | ObjectCatalog,
                     places: Sequence[str] | ClassCatalog, default_prior: float = DEFAULT_PRIOR,
                     place_map: Mapping[str, str] | None = None) -> ObjectPriorTable:
    """Build the table from ``(object, place, count)`` triples.

    Counts may also be probabilities; only their ratios within a place
    matter.  ``place_map`` renames source scene types to catalog labels.
    Unknown names raise a single error listing every offender.
    """
    if not default_prior > 0:
        raise ValueError("default prior must be positive")
    objects = objects if isinstance(objects, ClassCatalog) else ObjectCatalog(objects)
    places = places if isinstance(places, ClassCatalog) else ClassCatalog(places)
    counts = np.zeros((len(objects), len(places)))
    bad = []
    for obj, place, cnt in source:
        place = place_map.get(place, place) if place_map else place
        if obj not in objects:
            bad.append(f"object {obj!r}")
        if place not in places:
            bad.append(f"place {place!r}")
        if obj not in objects or place not in places:
            continue
        cnt = float(cnt)
        if not np.isfinite(cnt) or cnt < 0:
            raise ValueError(f"invalid count {cnt!r} for ({obj}, {place})")
        counts[objects.index(obj), places.index(place)] += cnt
    if bad:
        raise ValueError("unknown labels in prior source: " + ", ".join(sorted(set(bad))))
    values = np.column_stack([floor_column(counts[:, j], default_prior)
                              for j in range(len(places))])
    return ObjectPriorTable(objects, places, values, default_prior)


def read_triples(path) -> list[tuple[str, str, float]]:
    """Read ``object,place,count`` rows (header row required)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or [c.strip() for c in rows[0][:3]] != ["object", "place", "count"]:
        raise ValueError(f"{path}: expected header 'object,place,count'")
    out = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) < 3:
            raise ValueError(f"{path}: row {lineno} has fewer than 3 fields")
        out.append((r[0].strip(), r[1].strip(), float(r[2])))
    return out


def boost(likelihood, table: ObjectPriorTable, place: int) -> np.ndarray:
    lik = np.asarray(likelihood, dtype=float)
    if lik.shape != (len(table.objects),):
        raise ValueError(f"likelihood has {lik.size} entries, table has {len(table.objects)} objects")
    if np.any(lik < 0) or abs(lik.sum() - 1.0) > 1e-6:
        raise ValueError("object likelihood must be a distribution")
    post = lik * table.column(place)
    return post / post.sum()


def top_k(posterior, k: int) -> list[tuple[int, float]]:
    p = np.asarray(posterior, dtype=float)
    if not 1 <= k <= p.size:
        raise ValueError(f"k must lie in [1, {p.size}], got {k}")
    # stable sort on -p keeps lower indices first among ties
    order = np.argsort(-p, kind="stable")[:k]
    return [(int(i), float(p[i])) for i in order]


def load_object_likelihood(path) -> tuple[list[str], np.ndarray]:
    """JSON ``{"format": "semmap-object-likelihood", "version": 1, "objects": [...], "likelihood": [...]}``."""
    d = json.loads(Path(path).read_text())
    if d.get("format") != "semmap-object-likelihood" or d.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 object likelihood file")
    names, lik = list(d["objects"]), np.array(d["likelihood"], dtype=float)
    if len(names) != lik.size:
        raise ValueError(f"{path}: objects and likelihood differ in length")
    return names, lik
