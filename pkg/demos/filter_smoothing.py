"""Raw per-frame labels flicker; the filtered belief does not.

Drives the robot around the three-room world with a classifier that is
right 75% of the time, then compares the per-frame argmax with the
filtered MAP label.
"""

import math
import sys

from semmap.harness import config_from_dict, run_pipeline

cfg = config_from_dict({
    "catalog": {"base": ["corridor", "office", "kitchenette"]},
    "world": "three_room",
    "trajectory": {"waypoints": "three_room", "frames": 2000},
    "noise": {"accuracy": 0.75, "peak_mass": 0.7},
    "gate": {"camera_fov_half_angle": math.radians(30)},
    "seed": int(sys.argv[1]) if len(sys.argv) > 1 else 0,
})
m = run_pipeline(cfg, write=False).metrics

print(f"frames            {m.n_frames}")
print(f"label switches    ML {m.ml_switches:5d}   MAP {m.map_switches:5d}")
print(f"frame accuracy    ML {m.ml_accuracy:.3f}   MAP {m.map_accuracy:.3f}")
for env, v in m.per_environment.items():
    print(f"  {env:<12} {v['frames']:5d} frames   ML {v['ml_accuracy']:.3f}   MAP {v['map_accuracy']:.3f}")
