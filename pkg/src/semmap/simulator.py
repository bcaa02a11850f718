"""Synthetic worlds and sensor streams.

A world is a grid with wall cells and a ground-truth place label per cell.
A robot is driven along waypoints; at each pose the simulator produces a
laser scan against the walls, a noisy place-classifier likelihood and,
optionally, a label-conditioned feature vector for the one-vs-all scorers.
Everything is deterministic given the seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .catalog import ClassCatalog
from .semantic_grid import GridGeometry, LaserScan, Pose2D, cast_ray

WALL = -1


@dataclass
class WorldSpec:
    geometry: GridGeometry
    regions: list = field(default_factory=list)  # (x0, y0, x1, y1, label)
    walls: list = field(default_factory=list)    # (x0, y0, x1, y1) filled boxes
    default_label: str | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d, geometry: GridGeometry) -> "WorldSpec":
        regions = [tuple(r["box"]) + (r["label"],) if isinstance(r, dict) else tuple(r)
                   for r in d.get("regions", [])]
        walls = [tuple(w) for w in d.get("walls", [])]
        return cls(geometry, regions, walls, d.get("default_label"), int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        return {"regions": [{"box": list(r[:4]), "label": r[4]} for r in self.regions],
                "walls": [list(w) for w in self.walls],
                "default_label": self.default_label, "seed": self.seed}


@dataclass
class World:
    spec: WorldSpec
    catalog: ClassCatalog
    wall: np.ndarray    # (H, W) bool
    labels: np.ndarray  # (H, W) catalog index, WALL on wall cells

    @property
    def geometry(self) -> GridGeometry:
        return self.spec.geometry

    def label_at(self, x: float, y: float) -> int:
        ix, iy = self.geometry.world_to_cell(x, y)
        if not self.geometry.in_bounds(ix, iy):
            raise ValueError(f"({x}, {y}) lies outside the world")
        return int(self.labels[iy, ix])

    def is_free(self, x: float, y: float) -> bool:
        ix, iy = self.geometry.world_to_cell(x, y)
        return self.geometry.in_bounds(ix, iy) and not self.wall[iy, ix]


def _box_mask(g: GridGeometry, box) -> np.ndarray:
    x0, y0, x1, y1 = box
    xs = g.origin[0] + (np.arange(g.width) + 0.5) * g.resolution
    ys = g.origin[1] + (np.arange(g.height) + 0.5) * g.resolution
    inx = (xs >= min(x0, x1)) & (xs < max(x0, x1))
    iny = (ys >= min(y0, y1)) & (ys < max(y0, y1))
    return iny[:, None] & inx[None, :]


def generate_world(spec: WorldSpec, catalog: ClassCatalog) -> World:
    """Rasterize regions and walls.  Later regions override earlier ones."""
    g = spec.geometry
    for r in spec.regions:
        if r[4] not in catalog:
            raise ValueError(f"region label {r[4]!r} is not in the catalog")
    default = spec.default_label
    if default is None:
        if not spec.regions:
            raise ValueError("world needs regions or a default label")
        default = spec.regions[0][4]
    labels = np.full(g.shape, catalog.index(default), dtype=np.int64)
    for r in spec.regions:
        labels[_box_mask(g, r[:4])] = catalog.index(r[4])
    wall = np.zeros(g.shape, dtype=bool)
    for w in spec.walls:
        wall |= _box_mask(g, w)
    labels[wall] = WALL
    return World(spec, catalog, wall, labels)


def box_world(geometry: GridGeometry, catalog: ClassCatalog, label: str,
              thickness: float | None = None) -> World:
    """A single room with walls along the border."""
    t = thickness or geometry.resolution
    ox, oy = geometry.origin
    x1 = ox + geometry.width * geometry.resolution
    y1 = oy + geometry.height * geometry.resolution
    walls = [(ox, oy, x1, oy + t), (ox, y1 - t, x1, y1),
             (ox, oy, ox + t, y1), (x1 - t, oy, x1, y1)]
    return generate_world(WorldSpec(geometry, [(ox, oy, x1, y1, label)], walls, label), catalog)


def three_room_spec(resolution: float = 0.1, size: float = 10.0) -> WorldSpec:
    """Two rooms above a corridor, connected by doorways.

    Labels: ``corridor`` (bottom strip), ``office`` (top left),
    ``kitchenette`` (top right).
    """
    n = int(round(size / resolution))
    g = GridGeometry(resolution, n, n)
    s, t = size, 0.2
    split, mid = 0.3 * s, 0.5 * s
    door = 1.2
    regions = [(0, 0, s, split, "corridor"),
               (0, split, mid, s, "office"),
               (mid, split, s, s, "kitchenette")]
    walls = [(0, 0, s, t), (0, s - t, s, s), (0, 0, t, s), (s - t, 0, s, s),
             # corridor/room wall with one doorway per room
             (0, split, 0.25 * s - door / 2, split + t),
             (0.25 * s + door / 2, split, 0.75 * s - door / 2, split + t),
             (0.75 * s + door / 2, split, s, split + t),
             # wall between the two rooms
             (mid, split, mid + t, s)]
    return WorldSpec(g, regions, walls, "corridor")


def three_room_route(size: float = 10.0) -> list[tuple[float, float]]:
    """Loop through corridor, office, corridor, kitchenette, back to start."""
    s = size
    split = 0.3 * s
    return [(0.1 * s, 0.15 * s), (0.25 * s, 0.15 * s), (0.25 * s, split + 0.1 * s),
            (0.25 * s, 0.75 * s), (0.1 * s, 0.85 * s), (0.4 * s, 0.85 * s),
            (0.25 * s, 0.75 * s), (0.25 * s, split + 0.1 * s), (0.25 * s, 0.15 * s),
            (0.75 * s, 0.15 * s), (0.75 * s, split + 0.1 * s), (0.75 * s, 0.75 * s),
            (0.9 * s, 0.85 * s), (0.6 * s, 0.85 * s), (0.75 * s, 0.75 * s),
            (0.75 * s, split + 0.1 * s), (0.75 * s, 0.15 * s), (0.1 * s, 0.15 * s)]


# -- scans --------------------------------------------------------------------

@dataclass(frozen=True)
class ScanParams:
    angle_min: float = -math.pi / 2
    angle_increment: float = math.radians(1.0)
    n_beams: int = 181
    range_max: float = 10.0

    def to_dict(self) -> dict:
        return {"angle_min": self.angle_min, "angle_increment": self.angle_increment,
                "n_beams": self.n_beams, "range_max": self.range_max}

    @classmethod
    def from_dict(cls, d) -> "ScanParams":
        return cls(float(d.get("angle_min", -math.pi / 2)),
                   float(d.get("angle_increment", math.radians(1.0))),
                   int(d.get("n_beams", 181)), float(d.get("range_max", 10.0)))


def simulate_scan(world: World, pose: Pose2D, params: ScanParams = ScanParams(),
                  step: float | None = None) -> LaserScan:
    """March every beam at sub-cell steps until it enters a wall cell.

    Beams that leave the map or exceed ``range_max`` report no return
    (``inf``).  Ranges overshoot the wall face by less than one step.
    """
    g = world.geometry
    if not world.is_free(pose.x, pose.y):
        raise ValueError(f"pose ({pose.x}, {pose.y}) is inside a wall or off the map")
    step = step or g.resolution / 4.0
    n_steps = int(math.floor(params.range_max / step))
    t = step * np.arange(1, n_steps + 1)
    ang = pose.theta + params.angle_min + params.angle_increment * np.arange(params.n_beams)
    px = pose.x + np.cos(ang)[:, None] * t[None, :]
    py = pose.y + np.sin(ang)[:, None] * t[None, :]
    ix = np.floor((px - g.origin[0]) / g.resolution).astype(np.int64)
    iy = np.floor((py - g.origin[1]) / g.resolution).astype(np.int64)
    inside = (ix >= 0) & (ix < g.width) & (iy >= 0) & (iy < g.height)
    blocked = np.zeros_like(inside)
    blocked[inside] = world.wall[iy[inside], ix[inside]]
    stop = blocked | ~inside
    first = np.argmax(stop, axis=1)
    any_stop = stop[np.arange(params.n_beams), first]
    hit_wall = any_stop & blocked[np.arange(params.n_beams), first]
    ranges = np.where(hit_wall, t[first], np.inf)
    return LaserScan(params.angle_min, params.angle_increment, ranges, params.range_max)


# -- classifier noise ---------------------------------------------------------

@dataclass
class ClassifierNoiseModel:
    """Synthetic place classifier over the base labels of a catalog.

    With probability ``accuracy`` the likelihood peaks on the true label,
    otherwise on a wrong label drawn from ``confusion`` (or uniformly) among
    ``allowed``.  Peaks never land outside ``allowed``.  The peak carries ``peak_mass``; the rest is spread evenly.
    Frames whose true label is not a base label get a flat likelihood.
    """

    n_labels: int
    accuracy: float = 0.75
    peak_mass: float = 0.7
    allowed: Sequence[int] | None = None
    confusion: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise ValueError("accuracy must lie in [0, 1]")
        if self.n_labels > 1 and not 1.0 / self.n_labels < self.peak_mass < 1.0:
            raise ValueError("peak_mass must lie in (1/size, 1)")
        self.allowed = np.arange(self.n_labels) if self.allowed is None \
            else np.array(sorted(self.allowed), dtype=np.int64)
        if self.confusion is not None:
            c = np.asarray(self.confusion, dtype=float)
            if c.shape != (self.n_labels, self.n_labels) or np.any(c < 0) \
                    or not np.allclose(c.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("confusion must be a row-stochastic square matrix")
            self.confusion = c
        self.rng = np.random.default_rng(self.seed)

    def _wrong_label(self, true: int) -> int:
        mask = np.zeros(self.n_labels, dtype=bool)
        mask[self.allowed] = True
        mask[true] = False
        if not mask.any():
            return true
        if self.confusion is None:
            w = mask.astype(float)
        else:
            w = np.where(mask, self.confusion[true], 0.0)
            if w.sum() <= 0:
                w = mask.astype(float)
        return int(self.rng.choice(self.n_labels, p=w / w.sum()))

    def sample(self, true: int) -> np.ndarray:
        # draw the accuracy coin on every call so the stream stays aligned
        coin = self.rng.random()
        if not 0 <= true < self.n_labels:
            return np.full(self.n_labels, 1.0 / self.n_labels)
        # a masked true label is never emitted; the classifier confuses it instead
        hit = coin < self.accuracy and true in self.allowed
        peak = true if hit else self._wrong_label(true)
        if self.n_labels == 1:
            return np.ones(1)
        out = np.full(self.n_labels, (1.0 - self.peak_mass) / (self.n_labels - 1))
        out[peak] = self.peak_mass
        return out


def simulate_classifier(world: World, pose: Pose2D, noise: ClassifierNoiseModel) -> np.ndarray:
    return noise.sample(world.label_at(pose.x, pose.y))


@dataclass
class FeatureModel:
    """Label-conditioned Gaussian clusters standing in for network activations."""

    dim: int
    n_labels: int
    scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        mean_rng = np.random.default_rng([self.seed, 1])
        self.means = mean_rng.standard_normal((self.n_labels, self.dim))
        self.rng = np.random.default_rng([self.seed, 2])

    def sample(self, label: int) -> np.ndarray:
        return self.means[label] + self.scale * self.rng.standard_normal(self.dim)

    def training_set(self, target: int, n_pos: int, n_neg: int, rng=None):
        """Positives from ``target``'s cluster, negatives spread over the rest."""
        from .expansion import TrainingSet
        rng = rng if rng is not None else np.random.default_rng([self.seed, 3])
        others = np.array([k for k in range(self.n_labels) if k != target])
        pos = self.means[target] + self.scale * rng.standard_normal((n_pos, self.dim))
        neg_lab = rng.choice(others, size=n_neg)
        neg = self.means[neg_lab] + self.scale * rng.standard_normal((n_neg, self.dim))
        return TrainingSet(pos, neg)


# -- trajectories -------------------------------------------------------------

def drive(world: World, waypoints, speed: float = 0.5, dt: float = 0.1) -> list[Pose2D]:
    """Poses sampled every ``speed * dt`` meters along the waypoint polyline.

    The first and last waypoints are always included.  Heading follows the
    current segment.  Straight segments must not cross wall cells.
    """
    pts = [tuple(map(float, p)) for p in waypoints]
    if not pts:
        raise ValueError("need at least one waypoint")
    if speed <= 0 or dt <= 0:
        raise ValueError("speed and dt must be positive")
    for p in pts:
        if not world.is_free(*p):
            raise ValueError(f"waypoint {p} is inside a wall or off the map")
    for a, b in zip(pts, pts[1:]):
        cells = cast_ray(world.geometry, a, b).cells
        if np.any(world.wall[cells[:, 1], cells[:, 0]]):
            raise ValueError(f"waypoint {b} is not reachable from {a} in a straight line")
    if len(pts) == 1:
        return [Pose2D(pts[0][0], pts[0][1], 0.0)]

    seg = [(a, b, math.dist(a, b)) for a, b in zip(pts, pts[1:]) if math.dist(a, b) > 0]
    if not seg:
        return [Pose2D(pts[0][0], pts[0][1], 0.0)]
    cum = np.concatenate([[0.0], np.cumsum([s[2] for s in seg])])
    total = float(cum[-1])
    ds = speed * dt
    n = int(math.floor(total / ds + 1e-9))
    svals = [k * ds for k in range(n + 1)]
    if total - svals[-1] > 1e-9:
        svals.append(total)
    poses = []
    for s in svals:
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        (ax, ay), (bx, by), length = seg[k]
        u = min(max((s - cum[k]) / length, 0.0), 1.0)
        poses.append(Pose2D(ax + u * (bx - ax), ay + u * (by - ay), math.atan2(by - ay, bx - ax)))
    return poses


# -- streams ------------------------------------------------------------------

@dataclass
class FrameRecord:
    t: float
    pose: Pose2D
    scan: LaserScan
    base_likelihood: np.ndarray
    feature: np.ndarray | None = None
    true_label: int | None = None
    env: str | None = None

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented
        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)
        return (self.t == other.t and self.pose == other.pose
                and self.scan.angle_min == other.scan.angle_min
                and self.scan.angle_increment == other.scan.angle_increment
                and self.scan.range_max == other.scan.range_max
                and np.array_equal(self.scan.ranges, other.scan.ranges)
                and np.array_equal(self.base_likelihood, other.base_likelihood)
                and same(self.feature, other.feature)
                and self.true_label == other.true_label and self.env == other.env)


def simulate_stream(world: World, poses: Sequence[Pose2D], noise: ClassifierNoiseModel,
                    scan_params: ScanParams = ScanParams(), features: FeatureModel | None = None,
                    dt: float = 0.1, n_frames: int | None = None) -> list[FrameRecord]:
    """One frame per pose; the route repeats when ``n_frames`` exceeds it."""
    if not poses:
        raise ValueError("no poses to simulate")
    n = len(poses) if n_frames is None else n_frames
    frames = []
    scans: dict[int, LaserScan] = {}
    for k in range(n):
        j = k % len(poses)
        pose = poses[j]
        truth = world.label_at(pose.x, pose.y)
        if j not in scans:
            scans[j] = simulate_scan(world, pose, scan_params)
        scan = scans[j]
        lik = noise.sample(truth)
        feat = features.sample(truth) if features is not None else None
        frames.append(FrameRecord(k * dt, pose, scan, lik, feat, truth))
    return frames
