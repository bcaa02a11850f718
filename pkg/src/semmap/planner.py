"""A* planning over semantic cost maps.

Each place label gets a traversal cost multiplier.  Moving between two
8-neighboring cells costs the center distance (1 or sqrt 2, in cells) times
the mean of the two cells' multipliers.  Changing the table between calls
is how behavior is modulated, e.g. avoiding offices during the day and
taking the shortest route at night.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .semantic_grid import OCCUPIED, UNKNOWN, SemanticGridMap, winning_label_render

IMPASSABLE = math.inf
SQRT2 = math.sqrt(2.0)
_MOVES = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


def _check_multiplier(name, v):
    if v == IMPASSABLE:
        return v
    v = float(v)
    if not (math.isfinite(v) and v >= 1.0):
        raise ValueError(f"cost multiplier for {name!r} must be >= 1 or impassable, got {v}")
    return v


@dataclass
class CostTable:
    costs: dict[str, float] = field(default_factory=dict)
    default: float | None = None
    unknown_cost: float = 1.0
    occupied: float = IMPASSABLE

    def __post_init__(self):
        self.costs = {k: _check_multiplier(k, v) for k, v in self.costs.items()}
        if self.default is not None:
            self.default = _check_multiplier("default", self.default)
        self.unknown_cost = _check_multiplier("unknown", self.unknown_cost)
        self.occupied = _check_multiplier("occupied", self.occupied)

    def lookup(self, label: str) -> float:
        if label in self.costs:
            return self.costs[label]
        if self.default is None:
            raise KeyError(f"no cost for label {label!r} and no default")
        return self.default

    def with_cost(self, label: str, value: float) -> "CostTable":
        costs = dict(self.costs)
        costs[label] = value
        return CostTable(costs, self.default, self.unknown_cost, self.occupied)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostTable":
        def parse(v):
            if v is None or (isinstance(v, str) and v.lower() in ("inf", "impassable")):
                return IMPASSABLE
            return v
        costs = {k: parse(v) for k, v in d.get("costs", {}).items()}
        default = d.get("default")
        return cls(costs, None if default is None else parse(default),
                   parse(d.get("unknown", 1.0)), parse(d.get("occupied", "inf")))

    @classmethod
    def load(cls, path) -> "CostTable":
        d = yaml.safe_load(Path(path).read_text())
        if not isinstance(d, Mapping) or "costs" not in d:
            raise ValueError(f"{path}: cost table needs a 'costs' mapping")
        return cls.from_dict(d)


def build_costmap(m: SemanticGridMap, table: CostTable, min_confidence: float = 0.5) -> np.ndarray:
    """Per-cell cost multiplier from the winning labels of ``m``."""
    render = winning_label_render(m, min_confidence)
    lut = np.array([table.lookup(name) for name in m.labels], dtype=float)
    field_ = np.full(render.shape, table.unknown_cost)
    labeled = render >= 0
    field_[labeled] = lut[render[labeled]]
    field_[render == OCCUPIED] = table.occupied
    return field_


@dataclass
class PlanResult:
    path: list[tuple[int, int]]
    total_cost: float
    expanded_nodes: int

    @property
    def found(self) -> bool:
        return bool(self.path)


def octile(ax, ay, bx, by) -> float:
    dx, dy = abs(ax - bx), abs(ay - by)
    return (SQRT2 - 1.0) * min(dx, dy) + max(dx, dy)


def plan(costfield, start: tuple[int, int], goal: tuple[int, int]) -> PlanResult:
    """Minimum-cost 8-connected path from ``start`` to ``goal``.

    Cells are ``(ix, iy)`` into a ``[iy, ix]`` field of multipliers, with
    ``inf`` for impassable cells.  The heuristic is octile distance times
    the smallest multiplier in the field, which is consistent, so no node
    is expanded twice.  Open-list ties go to lower f, then lower h, then
    lower flat index.  An unreachable goal yields an empty path with
    infinite cost.
    """
    cost = np.asarray(costfield, dtype=float)
    h, w = cost.shape
    for name, (x, y) in (("start", start), ("goal", goal)):
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"{name} {(x, y)} is outside the field")
        if not math.isfinite(cost[y, x]):
            raise ValueError(f"{name} {(x, y)} is not passable")
    finite = cost[np.isfinite(cost)]
    if np.any(finite < 1.0):
        raise ValueError("cost multipliers must be >= 1")
    hmul = float(finite.min())
    c = cost.tolist()
    gx, gy = goal
    s = start[1] * w + start[0]
    goal_i = gy * w + gx

    g = {s: 0.0}
    parent = {s: -1}
    closed = set()
    h0 = octile(start[0], start[1], gx, gy) * hmul
    heap = [(h0, h0, s)]
    expanded = 0
    while heap:
        f, hv, i = heapq.heappop(heap)
        if i in closed:
            continue
        closed.add(i)
        expanded += 1
        if i == goal_i:
            break
        x, y = i % w, i // w
        gi = g[i]
        ci = c[y][x]
        for dx, dy, d in _MOVES:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < w and 0 <= ny < h):
                continue
            cn = c[ny][nx]
            if cn == math.inf:
                continue
            j = ny * w + nx
            if j in closed:
                continue
            ng = gi + d * 0.5 * (ci + cn)
            if ng < g.get(j, math.inf):
                g[j] = ng
                parent[j] = i
                hj = octile(nx, ny, gx, gy) * hmul
                heapq.heappush(heap, (ng + hj, hj, j))
    if goal_i not in closed:
        return PlanResult([], math.inf, expanded)
    path = []
    i = goal_i
    while i != -1:
        path.append((i % w, i // w))
        i = parent[i]
    path.reverse()
    return PlanResult(path, g[goal_i], expanded)


def path_cost(costfield, path) -> float:
    """Sum of step costs along ``path`` (independent of the search)."""
    cost = np.asarray(costfield, dtype=float)
    total = 0.0
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        if max(abs(ax - bx), abs(ay - by)) != 1:
            raise ValueError("path cells are not 8-neighbors")
        d = SQRT2 if ax != bx and ay != by else 1.0
        total += d * 0.5 * (cost[ay, ax] + cost[by, bx])
    return total


def path_to_world(m_or_geometry, path):
    geom = getattr(m_or_geometry, "geometry", m_or_geometry)
    return [geom.cell_center(ix, iy) for ix, iy in path]


def overlay_rgb(render_img: np.ndarray, path, color=(255, 0, 0)) -> np.ndarray:
    """Draw ``path`` onto an RGB render (rows already flipped top-down)."""
    img = render_img.copy()
    h = img.shape[0]
    for ix, iy in path:
        img[h - 1 - iy, ix] = color
    return img


__all__ = ["CostTable", "PlanResult", "build_costmap", "plan", "path_cost",
           "path_to_world", "overlay_rgb", "IMPASSABLE", "UNKNOWN", "OCCUPIED"]
