"""Semantic place categorization and mapping.

Per-frame place-classifier likelihoods are fused over time with a discrete
Bayes filter, written into a layered semantic occupancy grid along laser
rays, and used for label-aware A* planning and place-conditioned object
re-ranking.  New place classes can be added at run time with one-vs-all
scorers over generic feature vectors.
"""

from .bayes_filter import EXACT, FilterConfig, InconsistentEvidence, PlaceFilter, init_filter, \
    map_label, ml_label
from .catalog import CatalogError, ClassCatalog, new_catalog, whitelist_prior
from .expansion import OneVsAllModel, TrainingConfig, TrainingSet, combine_likelihood, score, \
    train_one_vs_all
from .object_boost import ObjectPriorTable, boost, load_prior_table, top_k
from .planner import CostTable, PlanResult, build_costmap, plan
from .semantic_grid import (OCCUPIED, UNKNOWN, GridGeometry, LaserScan, Pose2D, SemanticGridMap,
                            SensorGate, add_layer, cast_ray, cell_probability, load_map, new_map,
                            save_map, update_semantic, winning_label_render)

__version__ = "0.1.0"
