"""Knowing the room helps name the object.

An object classifier is unsure between a bike and a cup; the kitchen's
object prior tips it toward the cup.
"""

import numpy as np

from semmap.object_boost import boost, load_prior_table, top_k

objects = ["bike", "cup", "monitor", "kettle", "stapler"]
places = ["kitchen", "office"]
counts = [("cup", "kitchen", 40), ("kettle", "kitchen", 25), ("bike", "kitchen", 1),
          ("monitor", "office", 30), ("stapler", "office", 20), ("cup", "office", 10)]
table = load_prior_table(counts, objects, places)

lik = np.array([0.40, 0.30, 0.15, 0.10, 0.05])
for place in places:
    post = boost(lik, table, places.index(place))
    print(f"in the {place}:")
    for (i, p), (j, q) in zip(top_k(lik, 3), top_k(post, 3)):
        print(f"   {objects[i]:<8} {p:.3f}   ->   {objects[j]:<8} {q:.3f}")
