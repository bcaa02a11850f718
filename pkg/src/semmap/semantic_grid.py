"""Layered semantic occupancy grid.

Level 0 is an ordinary occupancy grid.  Above it sits one log-odds layer per
place class; a cell's value in layer ``i`` is the log-odds that the cell
belongs to class ``i``.  Each frame, laser rays inside the camera's field of
view are traced up to the semantic range and every free cell they cross
receives the current place posterior as an additive log-odds increment,
followed by clamping to ``[l_min, l_max]``.

Arrays are indexed ``[iy, ix]``; cells are passed around as ``(ix, iy)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._io import atomic_write

log = logging.getLogger(__name__)

UNKNOWN = -1
OCCUPIED = -2

DUMP_MAGIC = b"SEMMAP\n"
DUMP_VERSION = 1
_P_EPS = 1e-12


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class GridGeometry:
    resolution: float
    width: int
    height: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValueError("resolution must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid needs at least one cell in each direction")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor((x - self.origin[0]) / self.resolution),
                math.floor((y - self.origin[1]) / self.resolution))

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def to_dict(self) -> dict:
        return {"resolution": self.resolution, "width": self.width,
                "height": self.height, "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d) -> "GridGeometry":
        return cls(float(d["resolution"]), int(d["width"]), int(d["height"]),
                   tuple(d.get("origin", (0.0, 0.0))))


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValueError("pose must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass
class LaserScan:
    """Planar scan; ``inf`` marks a beam without a return."""

    angle_min: float
    angle_increment: float
    ranges: np.ndarray
    range_max: float

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.ranges.ndim != 1 or self.ranges.size == 0:
            raise ValueError("scan needs at least one range")
        if np.any(np.isnan(self.ranges)):
            raise ValueError("NaN range; use inf for no return")
        if np.any(self.ranges <= 0):
            raise ValueError("ranges must be positive")

    def bearings(self) -> np.ndarray:
        return self.angle_min + self.angle_increment * np.arange(self.ranges.size)

    def returns(self) -> np.ndarray:
        return np.isfinite(self.ranges) & (self.ranges <= self.range_max)


@dataclass(frozen=True)
class SensorGate:
    camera_fov_half_angle: float
    semantic_range: float = 5.0

    def __post_init__(self):
        if not 0 < self.camera_fov_half_angle <= math.pi:
            raise ValueError("camera half angle must lie in (0, pi]")
        if not self.semantic_range > 0:
            raise ValueError("semantic range must be positive")


class RayCells(NamedTuple):
    cells: np.ndarray  # (N, 2) int, (ix, iy), start cell first
    hit: bool          # last cell is the obstacle that ended the ray


def _axis_steps(p0, p1, cell):
    """Step sign, parameter per cell, and parameter of the first crossing on one axis."""
    d = np.float64(p1) - np.float64(p0)
    if d == 0:
        return 0, math.inf, math.inf
    # a subnormal direction overflows to inf, i.e. the axis never steps
    with np.errstate(over="ignore"):
        if d > 0:
            return 1, float(1.0 / d), float((cell + 1 - p0) / d)
        return -1, float(-1.0 / d), float((p0 - cell) / -d)


def _traverse(x0, y0, x1, y1, width, height):
    """Grid cells crossed by the segment, in grid units.

    Steps diagonally when the segment passes exactly through a cell corner,
    so it never visits a cell it only touches at a point.  Stops at the
    first cell outside ``[0, width) x [0, height)``.
    """
    ix, iy = math.floor(x0), math.floor(y0)
    ex, ey = math.floor(x1), math.floor(y1)
    out = []
    if not (0 <= ix < width and 0 <= iy < height):
        return out
    sx, tdx, tmx = _axis_steps(x0, x1, ix)
    sy, tdy, tmy = _axis_steps(y0, y1, iy)
    remaining = abs(ex - ix) + abs(ey - iy)
    append = out.append
    append((ix, iy))
    tol = 1e-12
    while remaining > 0:
        # an axis already at the end cell never steps again
        step_x = ix != ex and (iy == ey or tmx < tmy + tol)
        step_y = iy != ey and (ix == ex or tmy < tmx + tol)
        if step_x:
            ix += sx
            tmx += tdx
            remaining -= 1
        if step_y:
            iy += sy
            tmy += tdy
            remaining -= 1
        if not (0 <= ix < width and 0 <= iy < height):
            break
        append((ix, iy))
    return out


def _crossings(p0, p1):
    """Parameters in [0, 1] where each segment crosses integer grid lines on one axis.

    Returns an ``(n_rays, k)`` array padded with 1.0.
    """
    d = p1 - p0
    c0, c1 = np.floor(p0), np.floor(p1)
    n = np.abs(c1 - c0).astype(np.int64)
    k = int(n.max()) if n.size else 0
    if k == 0:
        return np.ones((p1.shape[0], 0))
    j = np.arange(k)[None, :]
    fwd = d > 0
    lines = np.where(fwd[:, None], c0[:, None] + 1 + j, c0[:, None] - j)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = (lines - p0[:, None]) / d[:, None]
    return np.where(j < n[:, None], t, 1.0)


def _traverse_fan(x0, y0, x1, y1, width, height):
    """Vectorized cell sets for rays sharing one start point.

    Equivalent to :func:`_traverse` per ray as a set of cells: the cell at
    the midpoint of every positive-length interval between grid-line
    crossings, plus the start cell and the in-bounds end cell.  Returns
    ``(ray, flat_index)`` pairs and the flat end cell per ray (``-1`` when
    the end cell is off the map).
    """
    n_rays = x1.shape[0]
    ex, ey = np.floor(x1).astype(np.int64), np.floor(y1).astype(np.int64)
    end_in = (ex >= 0) & (ex < width) & (ey >= 0) & (ey < height)
    end_flat = np.where(end_in, ey * width + ex, -1)
    sx, sy = math.floor(x0), math.floor(y0)
    t = np.concatenate([np.zeros((n_rays, 1)),
                        _crossings(np.full(n_rays, x0), x1),
                        _crossings(np.full(n_rays, y0), y1),
                        np.ones((n_rays, 1))], axis=1)
    t.sort(axis=1)
    lo, hi = t[:, :-1], t[:, 1:]
    keep = hi - lo > 1e-12
    mid = 0.5 * (lo + hi)
    cx = np.floor(x0 + mid * (x1 - x0)[:, None]).astype(np.int64)
    cy = np.floor(y0 + mid * (y1 - y0)[:, None]).astype(np.int64)
    keep &= (cx >= 0) & (cx < width) & (cy >= 0) & (cy < height)
    rays = np.broadcast_to(np.arange(n_rays)[:, None], keep.shape)[keep]
    flat = (cy * width + cx)[keep]
    start = np.full(n_rays, sy * width + sx)
    rays = np.concatenate([rays, np.arange(n_rays), np.flatnonzero(end_in)])
    flat = np.concatenate([flat, start, end_flat[end_in]])
    return rays, flat, end_flat


def cast_ray(geometry: GridGeometry, start, end, hit: bool = False) -> RayCells:
    """Cells traversed from ``start`` to ``end`` (world coordinates).

    Every cell the segment passes through is reported once, in order along
    the ray.  The result is clipped to the in-bounds prefix; ``hit`` is
    reported only when the endpoint cell survived clipping.
    """
    res = geometry.resolution
    ox, oy = geometry.origin
    x0, y0 = (start[0] - ox) / res, (start[1] - oy) / res
    x1, y1 = (end[0] - ox) / res, (end[1] - oy) / res
    if not all(math.isfinite(v) for v in (x0, y0, x1, y1)):
        raise ValueError("ray endpoints must be finite")
    cells = _traverse(x0, y0, x1, y1, geometry.width, geometry.height)
    reached = bool(cells) and cells[-1] == (math.floor(x1), math.floor(y1))
    arr = np.array(cells, dtype=np.int64).reshape(-1, 2)
    return RayCells(arr, bool(hit and reached))


@dataclass
class UpdateSummary:
    rays_used: int = 0
    semantic_cells: int = 0
    free_cells: int = 0
    hit_cells: int = 0
    skipped: bool = False
    warning: str | None = None


@dataclass
class OccupancyModel:
    p_hit: float = 0.7
    p_miss: float = 0.4

    @property
    def l_hit(self) -> float:
        return float(logit(self.p_hit))

    @property
    def l_miss(self) -> float:
        return float(logit(self.p_miss))


@dataclass
class SemanticGridMap:
    geometry: GridGeometry
    labels: list[str]
    clamp: tuple[float, float] = (-2.0, 3.5)
    cell_prior: np.ndarray | None = None
    occupancy_model: OccupancyModel = field(default_factory=OccupancyModel)
    occupancy: np.ndarray = None
    layers: np.ndarray = None
    observed: np.ndarray = None

    def __post_init__(self):
        l_min, l_max = self.clamp
        if not l_min < 0 < l_max:
            raise ValueError(f"clamp must satisfy l_min < 0 < l_max, got {self.clamp}")
        self.clamp = (float(l_min), float(l_max))
        self.labels = list(self.labels)
        k = len(self.labels)
        if self.cell_prior is None:
            self.cell_prior = np.full(k, 0.5)
        self.cell_prior = np.broadcast_to(np.asarray(self.cell_prior, dtype=float), (k,)).copy()
        if np.any(self.cell_prior <= 0) or np.any(self.cell_prior >= 1):
            raise ValueError("cell priors must lie strictly between 0 and 1")
        prior_l = self.prior_logodds
        if np.any(prior_l < l_min) or np.any(prior_l > l_max):
            raise ValueError("cell prior log-odds fall outside the clamp range")
        h, w = self.geometry.shape
        if self.layers is None:
            self.layers = np.repeat(prior_l[:, None, None], h, axis=1).repeat(w, axis=2)
        if self.occupancy is None:
            self.occupancy = np.zeros((h, w))
        if self.observed is None:
            self.observed = np.zeros((h, w), dtype=bool)
        if self.layers.shape != (k, h, w):
            raise ValueError("layer array does not match geometry and label count")

    @property
    def prior_logodds(self) -> np.ndarray:
        return logit(self.cell_prior)

    @property
    def n_layers(self) -> int:
        return self.layers.shape[0]

    def copy(self) -> "SemanticGridMap":
        return SemanticGridMap(self.geometry, list(self.labels), self.clamp,
                               self.cell_prior.copy(),
                               OccupancyModel(self.occupancy_model.p_hit,
                                              self.occupancy_model.p_miss),
                               self.occupancy.copy(), self.layers.copy(), self.observed.copy())

    def occupancy_probability(self) -> np.ndarray:
        return sigmoid(self.occupancy)

    def probabilities(self) -> np.ndarray:
        return sigmoid(self.layers)


def new_map(geometry: GridGeometry, catalog, clamp=(-2.0, 3.5), cell_prior=0.5) -> SemanticGridMap:
    labels = list(catalog)
    prior = np.broadcast_to(np.asarray(cell_prior, dtype=float), (len(labels),)).copy()
    return SemanticGridMap(geometry, labels, clamp, prior)


def add_layer(m: SemanticGridMap, class_index: int, name: str | None = None,
              cell_prior: float = 0.5) -> SemanticGridMap:
    """Append a layer for a newly added expansion class, in place."""
    if class_index < m.n_layers:
        raise ValueError(f"layer {class_index} already exists")
    if class_index != m.n_layers:
        raise ValueError(f"next layer index is {m.n_layers}, got {class_index}")
    if not 0 < cell_prior < 1:
        raise ValueError("cell prior must lie strictly between 0 and 1")
    l0 = float(logit(cell_prior))
    if not m.clamp[0] <= l0 <= m.clamp[1]:
        raise ValueError("cell prior log-odds fall outside the clamp range")
    h, w = m.geometry.shape
    m.layers = np.concatenate([m.layers, np.full((1, h, w), l0)])
    m.cell_prior = np.append(m.cell_prior, cell_prior)
    m.labels.append(name if name is not None else f"class_{class_index}")
    return m


def semantic_increment(m: SemanticGridMap, posterior) -> np.ndarray:
    """Per-layer log-odds increment for one observation."""
    p = np.clip(np.asarray(posterior, dtype=float), _P_EPS, 1.0 - _P_EPS)
    return logit(p) - m.prior_logodds


def gated_cells(m: SemanticGridMap, pose: Pose2D, scan: LaserScan, gate: SensorGate):
    """Free and hit flat cell indices for one scan, plus the number of rays used.

    Each cell appears at most once per scan; a cell that is a hit for any
    ray is never treated as free.  The pose must lie inside the map.
    """
    g = m.geometry
    res = g.resolution
    x0 = (pose.x - g.origin[0]) / res
    y0 = (pose.y - g.origin[1]) / res
    bearings = scan.bearings()
    wrapped = np.remainder(bearings + np.pi, 2.0 * np.pi) - np.pi
    use = np.abs(wrapped) <= gate.camera_fov_half_angle + 1e-12
    # -pi wraps to +pi, which is the same direction
    use |= np.isclose(np.abs(wrapped), np.pi) & (gate.camera_fov_half_angle >= np.pi)
    empty = np.zeros(0, dtype=np.int64)
    if not use.any():
        return empty, empty, 0
    ranges = scan.ranges[use]
    ret = scan.returns()[use]
    reach = min(scan.range_max, gate.semantic_range)
    is_hit = ret & (ranges <= gate.semantic_range)
    length = np.where(is_hit, ranges, np.where(ret, np.minimum(ranges, reach), reach))
    a = pose.theta + bearings[use]
    x1 = x0 + length * np.cos(a) / res
    y1 = y0 + length * np.sin(a) / res
    rays, flat, end_flat = _traverse_fan(x0, y0, x1, y1, g.width, g.height)
    hit_rays = is_hit & (end_flat >= 0)
    hit_idx = np.unique(end_flat[hit_rays])
    free_idx = np.setdiff1d(np.unique(flat), hit_idx, assume_unique=True)
    return free_idx, hit_idx, int(use.sum())


def update_semantic(m: SemanticGridMap, pose: Pose2D, scan: LaserScan, gate: SensorGate,
                    posterior) -> UpdateSummary:
    """Write one filtered place posterior into the map along the gated rays.

    Only rays whose bearing lies within the camera half angle of the heading
    are used, each traced up to the semantic range.  Free cells get the
    posterior's log-odds increment in every layer; hit cells only update
    the occupancy layer.  Everything is clamped afterwards.
    """
    post = np.asarray(posterior, dtype=float)
    if post.shape != (m.n_layers,):
        raise ValueError(f"posterior has shape {post.shape}, map has {m.n_layers} layers")
    g = m.geometry
    if not g.in_bounds(*g.world_to_cell(pose.x, pose.y)):
        msg = f"pose ({pose.x:.3f}, {pose.y:.3f}) is outside the map; frame skipped"
        log.warning(msg)
        return UpdateSummary(skipped=True, warning=msg)

    free_idx, hit_idx, rays = gated_cells(m, pose, scan, gate)
    l_min, l_max = m.clamp
    occ = m.occupancy.reshape(-1)
    if hit_idx.size:
        occ[hit_idx] = np.clip(occ[hit_idx] + m.occupancy_model.l_hit, l_min, l_max)
    if free_idx.size:
        occ[free_idx] = np.clip(occ[free_idx] + m.occupancy_model.l_miss, l_min, l_max)
        inc = semantic_increment(m, post)
        flat = m.layers.reshape(m.n_layers, -1)
        flat[:, free_idx] = np.clip(flat[:, free_idx] + inc[:, None], l_min, l_max)
        m.observed.reshape(-1)[free_idx] = True
    return UpdateSummary(rays, int(free_idx.size), int(free_idx.size), int(hit_idx.size))


def cell_probability(m: SemanticGridMap, cell: tuple[int, int], cls: int) -> float:
    ix, iy = cell
    if not m.geometry.in_bounds(ix, iy):
        raise IndexError(f"cell {cell} is outside the map")
    if not 0 <= cls < m.n_layers:
        raise IndexError(f"class {cls} has no layer")
    return float(sigmoid(m.layers[cls, iy, ix]))


def winning_label_render(m: SemanticGridMap, min_confidence: float = 0.5) -> np.ndarray:
    """Per-cell winning class index, or ``UNKNOWN`` / ``OCCUPIED``.

    A class wins a cell when it has the largest log-odds (lowest index on
    ties), the cell has been observed and the class probability reaches
    ``min_confidence``.  With ``min_confidence`` above ``sigmoid(l_min)``
    a class clamped at the floor can never win.
    """
    best = np.argmax(m.layers, axis=0)
    best_l = np.take_along_axis(m.layers, best[None], axis=0)[0]
    ok = m.observed & (sigmoid(best_l) >= min_confidence)
    out = np.where(ok, best, UNKNOWN)
    out[m.occupancy > 0] = OCCUPIED
    return out.astype(np.int64)


# -- export -----------------------------------------------------------------

_UNKNOWN_RGB = (128, 128, 128)
_OCCUPIED_RGB = (0, 0, 0)


def label_color(index: int) -> tuple[int, int, int]:
    """Deterministic, well-spread color for a class index."""
    hue = (index * 0.618033988749895) % 1.0
    sat, val = 0.65, 0.95 - 0.25 * ((index // 7) % 2)
    i = int(hue * 6)
    f = hue * 6 - i
    p, q, t = val * (1 - sat), val * (1 - f * sat), val * (1 - (1 - f) * sat)
    r, g, b = [(val, t, p), (q, val, p), (p, val, t), (p, q, val), (t, p, val), (val, p, q)][i % 6]
    return (round(r * 255), round(g * 255), round(b * 255))


def render_rgb(render: np.ndarray) -> np.ndarray:
    h, w = render.shape
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = _UNKNOWN_RGB
    img[render == OCCUPIED] = _OCCUPIED_RGB
    for k in np.unique(render[render >= 0]):
        img[render == k] = label_color(int(k))
    # image rows run top-down, grid rows bottom-up
    return img[::-1]


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def legend_text(labels: Sequence[str]) -> str:
    lines = ["# semmap-legend version=1", "# r g b label"]
    lines.append("%d %d %d %s" % (*_UNKNOWN_RGB, "unknown"))
    lines.append("%d %d %d %s" % (*_OCCUPIED_RGB, "occupied"))
    for i, name in enumerate(labels):
        lines.append("%d %d %d %s" % (*label_color(i), name))
    return "\n".join(lines) + "\n"


def export_render(m: SemanticGridMap, path, min_confidence: float = 0.5) -> np.ndarray:
    """Write the winning-label image (binary PPM) plus a ``.legend`` sidecar."""
    render = winning_label_render(m, min_confidence)
    atomic_write(path, ppm_bytes(render_rgb(render)))
    atomic_write(str(path) + ".legend", legend_text(m.labels))
    return render


def read_ppm(path) -> np.ndarray:
    data = open(path, "rb").read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


def dump_bytes(m: SemanticGridMap) -> bytes:
    header = {
        "format": "semmap-map",
        "version": DUMP_VERSION,
        "geometry": m.geometry.to_dict(),
        "labels": list(m.labels),
        "clamp": list(m.clamp),
        "cell_prior": m.cell_prior.tolist(),
        "occupancy_model": {"p_hit": m.occupancy_model.p_hit,
                            "p_miss": m.occupancy_model.p_miss},
        "arrays": ["occupancy:<f8", "layers:<f8", "observed:u1"],
    }
    h = json.dumps(header, sort_keys=True).encode()
    return b"".join([
        DUMP_MAGIC, h, b"\n",
        m.occupancy.astype("<f8").tobytes(),
        m.layers.astype("<f8").tobytes(),
        m.observed.astype("u1").tobytes(),
    ])


def loads_map(data: bytes) -> SemanticGridMap:
    if not data.startswith(DUMP_MAGIC):
        raise ValueError("not a semantic map dump")
    nl = data.index(b"\n", len(DUMP_MAGIC))
    header = json.loads(data[len(DUMP_MAGIC):nl])
    if header.get("version") != DUMP_VERSION:
        raise ValueError(f"unsupported map dump version {header.get('version')!r}")
    geom = GridGeometry.from_dict(header["geometry"])
    h, w = geom.shape
    k = len(header["labels"])
    body = memoryview(data)[nl + 1:]
    n_occ, n_lay = h * w * 8, k * h * w * 8
    if len(body) != n_occ + n_lay + h * w:
        raise ValueError("map dump body has the wrong size")
    occ = np.frombuffer(body[:n_occ], dtype="<f8").reshape(h, w).astype(float)
    lay = np.frombuffer(body[n_occ:n_occ + n_lay], dtype="<f8").reshape(k, h, w).astype(float)
    obs = np.frombuffer(body[n_occ + n_lay:], dtype="u1").reshape(h, w).astype(bool)
    om = header.get("occupancy_model", {})
    return SemanticGridMap(geom, header["labels"], tuple(header["clamp"]),
                           np.array(header["cell_prior"], dtype=float),
                           OccupancyModel(om.get("p_hit", 0.7), om.get("p_miss", 0.4)),
                           occ, lay, obs)


def save_map(m: SemanticGridMap, path) -> None:
    atomic_write(path, dump_bytes(m))


def load_map(path) -> SemanticGridMap:
    with open(path, "rb") as fh:
        return loads_map(fh.read())
