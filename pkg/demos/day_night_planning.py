"""Same map, two cost tables: avoid the office by day, cut through it at night.

The world has a corridor loop with an office in the middle.  Going straight
through the office is shorter; going around stays in the corridor.  The
semantic map is built by driving the loop with a noisy place classifier.
"""

import math

import numpy as np

from semmap.bayes_filter import FilterConfig, PlaceFilter
from semmap.catalog import new_catalog, whitelist_prior
from semmap.planner import CostTable, build_costmap, plan
from semmap.semantic_grid import GridGeometry, SensorGate, new_map, update_semantic
from semmap.simulator import (ClassifierNoiseModel, ScanParams, WorldSpec, drive,
                              generate_world, simulate_stream)

cat = new_catalog(["corridor", "office"])
g = GridGeometry(0.1, 80, 60)
walls = [(0, 0, 8, 0.2), (0, 5.8, 8, 6), (0, 0, 0.2, 6), (7.8, 0, 8, 6),
         # office box from x 2.5..5.5, y 1.5..4.5, with a door on each short side
         (2.5, 1.5, 5.5, 1.7), (2.5, 4.3, 5.5, 4.5),
         (2.5, 1.5, 2.7, 2.6), (2.5, 3.4, 2.7, 4.5),
         (5.3, 1.5, 5.5, 2.6), (5.3, 3.4, 5.5, 4.5)]
world = generate_world(WorldSpec(g, [(2.5, 1.5, 5.5, 4.5, "office")], walls, "corridor"), cat)

loop = [(1, 3), (1, 0.8), (7, 0.8), (7, 5.2), (1, 5.2), (1, 3), (4, 3), (7, 3)]
poses = drive(world, loop, speed=0.5, dt=0.1)
frames = simulate_stream(world, poses, ClassifierNoiseModel(2, 0.75, 0.7, seed=1),
                         ScanParams(), n_frames=3 * len(poses))

filt = PlaceFilter(cat, whitelist_prior(cat), FilterConfig())
m = new_map(g, cat)
for fr in frames:
    update_semantic(m, fr.pose, fr.scan, SensorGate(math.radians(30)),
                    filt.update(fr.base_likelihood))

start, goal = g.world_to_cell(1.0, 3.0), g.world_to_cell(7.0, 3.0)
for when, office in (("night", 1.0), ("day", 10.0)):
    table = CostTable({"corridor": 1.0, "office": office}, unknown_cost=2.0)
    r = plan(build_costmap(m, table), start, goal)
    labels = np.array([world.labels[iy, ix] for ix, iy in r.path])
    print(f"{when:<5}  office x{office:<4g} cost {r.total_cost:7.1f}  {len(r.path):3d} cells  "
          f"{int(np.sum(labels == 1)):3d} in the office  {r.expanded_nodes} expanded")
