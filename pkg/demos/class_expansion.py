"""Teach the robot a new place class at run time.

A one-vs-all scorer for "door" is trained on feature vectors, the class is
appended to the catalog, and a stream passing through door frames shows the
filter picking it up while the base classifier keeps saying "corridor".
"""

import time

import numpy as np

from semmap.bayes_filter import FilterConfig, PlaceFilter
from semmap.catalog import new_catalog, whitelist_prior
from semmap.expansion import expanded_likelihood, score, train_one_vs_all
from semmap.simulator import FeatureModel

cat = new_catalog(["corridor", "office", "kitchenette"])
door = cat.append_label("door")
features = FeatureModel(dim=64, n_labels=len(cat), seed=3)

t0 = time.perf_counter()
model = train_one_vs_all(features.training_set(door, 300, 900), door, catalog=cat)
print(f"trained '{model.target_name}' scorer on {model.n_pos}+{model.n_neg} examples "
      f"in {time.perf_counter() - t0:.2f} s")

filt = PlaceFilter(cat, whitelist_prior(cat), FilterConfig())
timeline = [0] * 15 + [door] * 15 + [1] * 15
print("\nframe  truth        base argmax  door score  MAP")
for i, truth in enumerate(timeline):
    base = np.full(3, 0.15)
    base[0 if truth == door else truth] = 0.7
    feat = features.sample(truth)
    belief = filt.update(expanded_likelihood(base, [model], feat, 1))
    if i % 3 == 0:
        print(f"{i:5d}  {cat.name(truth):<12} {cat.name(int(np.argmax(base))):<12} "
              f"{score(model, feat):10.3f}  {cat.name(int(np.argmax(belief)))}")
