"""Score a noisy prediction against its ground truth and print every metric.

    python3 demos/score_prediction.py
"""
import numpy as np

from minsurf import Skeleton, evaluate_pair, random_skeleton, serialize_text

gt = random_skeleton(7, min_nodes=5, max_nodes=5)

# jitter positions and sizes, then drop the last solid edge
rng = np.random.default_rng(0)
pred = Skeleton.from_arrays(
    gt.positions + rng.normal(0, 0.02, gt.positions.shape),
    gt.sizes * rng.uniform(0.8, 1.2, len(gt)),
    gt.solid_edges[:-1],
    gt.virtual_edges,
)

print(serialize_text(gt))
report = evaluate_pair(serialize_text(pred), serialize_text(gt))
for name, value in report.to_dict().items():
    print(f"{name:>20}: {value}")

# unparseable model output scores zero instead of raising
print("garbage ->", evaluate_pair("I think it is a torus", serialize_text(gt)).accuracy)
