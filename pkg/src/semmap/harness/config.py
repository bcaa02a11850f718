"""Run configuration (YAML or JSON).

Example::

    catalog:
      base: [corridor, office, kitchenette, parking_lot]
      expansion:
        - {name: door, model: door.model.json}   # or {name: door, features: door.csv}
    whitelist: [corridor, office, kitchenette]
    prior_weights: {corridor: 2}
    filter: {forgetting: 0.02, epsilon_floor: 1.0e-12, prior_mode: every_step}
    grid: {resolution: 0.1, width: 100, height: 100, origin: [0, 0]}
    map: {clamp: [-2.0, 3.5], cell_prior: 0.5, min_confidence: 0.5}
    gate: {camera_fov_half_angle: 0.6, semantic_range: 5.0}
    scan: {angle_min: -1.5708, angle_increment: 0.0174533, n_beams: 181, range_max: 10}
    world: three_room          # or {regions: [...], walls: [...], default_label: ...}
    trajectory: {waypoints: three_room, speed: 0.5, dt: 0.1, frames: 2000}
    noise: {accuracy: 0.75, peak_mass: 0.7}
    features: {dim: 16, scale: 0.3}
    seed: 0
    output: out/
    log: run.log.jsonl          # replay input

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..bayes_filter import FilterConfig
from ..catalog import CatalogError, ClassCatalog
from ..semantic_grid import GridGeometry, SensorGate
from ..simulator import ScanParams, WorldSpec, three_room_route, three_room_spec


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    base_labels: list[str]
    expansion: list[dict] = field(default_factory=list)
    whitelist: list[str] | None = None
    prior_weights: dict[str, float] | None = None
    filter: FilterConfig = field(default_factory=FilterConfig)
    grid: GridGeometry | None = None
    clamp: tuple[float, float] = (-2.0, 3.5)
    cell_prior: float = 0.5
    min_confidence: float = 0.5
    gate: SensorGate = field(default_factory=lambda: SensorGate(math.radians(30.0), 5.0))
    scan: ScanParams = field(default_factory=ScanParams)
    world: WorldSpec | None = None
    waypoints: list | None = None
    speed: float = 0.5
    dt: float = 0.1
    n_frames: int | None = None
    noise: dict = field(default_factory=lambda: {"accuracy": 0.75, "peak_mass": 0.7})
    feature_dim: int | None = None
    feature_scale: float = 0.3
    seed: int = 0
    output: Path | None = None
    log: Path | None = None
    cost_table: Path | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    def catalog(self) -> ClassCatalog:
        cat = ClassCatalog(self.base_labels)
        for e in self.expansion:
            cat.append_label(e["name"])
        return cat

    def validate(self) -> ClassCatalog:
        """Check every label reference; returns the catalog."""
        try:
            cat = self.catalog()
        except CatalogError as exc:
            raise ConfigError(str(exc)) from None
        refs = list(self.whitelist or []) + list(self.prior_weights or {})
        if self.world is not None:
            refs += [r[4] for r in self.world.regions]
            if self.world.default_label is not None:
                refs.append(self.world.default_label)
        unknown = sorted({r for r in refs if r not in cat})
        if unknown:
            raise ConfigError(f"config references unknown labels: {', '.join(unknown)}")
        if self.whitelist is not None and not self.whitelist:
            raise ConfigError("whitelist is empty")
        return cat

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _get(d, key, default=None):
    v = d.get(key, default)
    return default if v is None else v


def config_from_dict(d: dict, base_dir: Path | None = None) -> RunConfig:
    d = copy.deepcopy(d)
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        cat = d["catalog"]
    except KeyError:
        raise ConfigError("config needs a 'catalog' section") from None
    base = cat["base"] if isinstance(cat, dict) else list(cat)
    expansion = [e if isinstance(e, dict) else {"name": e}
                 for e in (cat.get("expansion", []) if isinstance(cat, dict) else [])]

    f = _get(d, "filter", {})
    fcfg = FilterConfig(float(_get(f, "forgetting", 0.02)), float(_get(f, "epsilon_floor", 1e-12)),
                        _get(f, "prior_mode", "every_step"))

    world_d = d.get("world")
    g = d.get("grid")
    if world_d == "three_room":
        spec = three_room_spec(**(_get(d, "world_options", {})))
        geometry = GridGeometry.from_dict(g) if g else spec.geometry
        spec.geometry = geometry
    elif isinstance(world_d, dict):
        if not g:
            raise ConfigError("a custom world needs a 'grid' section")
        geometry = GridGeometry.from_dict(g)
        spec = WorldSpec.from_dict(world_d, geometry)
    else:
        geometry = GridGeometry.from_dict(g) if g else None
        spec = None
    if spec is not None:
        spec.seed = int(_get(d, "seed", 0))

    m = _get(d, "map", {})
    gate_d = _get(d, "gate", {})
    gate = SensorGate(float(_get(gate_d, "camera_fov_half_angle", math.radians(30.0))),
                      float(_get(gate_d, "semantic_range", 5.0)))
    traj = _get(d, "trajectory", {})
    wps = traj.get("waypoints")
    if wps == "three_room":
        wps = three_room_route(**(_get(d, "world_options", {})))
    feats = _get(d, "features", {})

    def opt_path(key):
        v = d.get(key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    cfg = RunConfig(
        base_labels=list(base),
        expansion=expansion,
        whitelist=d.get("whitelist"),
        prior_weights=d.get("prior_weights"),
        filter=fcfg,
        grid=geometry,
        clamp=tuple(float(v) for v in _get(m, "clamp", (-2.0, 3.5))),
        cell_prior=float(_get(m, "cell_prior", 0.5)),
        min_confidence=float(_get(m, "min_confidence", 0.5)),
        gate=gate,
        scan=ScanParams.from_dict(_get(d, "scan", {})),
        world=spec,
        waypoints=wps,
        speed=float(_get(traj, "speed", 0.5)),
        dt=float(_get(traj, "dt", 0.1)),
        n_frames=traj.get("frames"),
        noise=_get(d, "noise", {"accuracy": 0.75, "peak_mass": 0.7}),
        feature_dim=feats.get("dim"),
        feature_scale=float(_get(feats, "scale", 0.3)),
        seed=int(_get(d, "seed", 0)),
        output=opt_path("output"),
        log=opt_path("log"),
        cost_table=opt_path("cost_table"),
        base_dir=base_dir,
    )
    return cfg


def load_config(path, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Load a config file, with flat top-level ``overrides`` applied first."""
    path = Path(path)
    d = yaml.safe_load(path.read_text())
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    for k, v in (overrides or {}).items():
        if v is not None:
            d[k] = v
    return config_from_dict(d, path.parent)


def prior_from_config(cfg: RunConfig, catalog: ClassCatalog) -> np.ndarray:
    from ..catalog import whitelist_prior
    allowed = None
    if cfg.whitelist is not None:
        # expansion labels are always admissible
        allowed = list(cfg.whitelist) + [n for n in catalog.expansion_labels
                                         if n not in cfg.whitelist]
    return whitelist_prior(catalog, allowed, cfg.prior_weights)
