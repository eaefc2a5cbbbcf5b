"""
Scoring detections with mAP
===========================

First a hand-sized case whose answer is easy to check on paper, then the
toy detector on a few clean and dimmed scenes.
"""

from wxaug import (AugmentationChain, BBox, Detection, DimConfig, GroundTruthBox, apply_chain,
                   average_precision, mean_average_precision)
from wxaug.dataset import Sample
from wxaug.toyworld import SceneSpec, ToyDetector, generate_scene

# Two ground-truth boxes, three detections ranked by confidence: hit, miss, hit.
# Precision at the hits is 1 and 2/3; recall steps 0.5 each time.
# AP = 0.5 * 1 + 0.5 * 2/3 = 5/6
print("AP [TP, FP, TP] =", average_precision([True, False, True], n_gt=2))

gts = [GroundTruthBox(0, BBox(10, 10, 50, 50), "a"), GroundTruthBox(0, BBox(60, 10, 100, 50), "a")]
dets = [
    Detection(0, BBox(12, 11, 50, 52), 0.9, "a"),
    Detection(0, BBox(200, 200, 230, 230), 0.8, "a"),
    Detection(0, BBox(58, 10, 99, 48), 0.7, "a"),
]
print("same case from boxes:", mean_average_precision(dets, gts).map)

# The toy detector on ten scenes.
samples = []
for i in range(10):
    frame, g = generate_scene(SceneSpec(seed=100 + i))
    samples.append(Sample(str(i), frame, [GroundTruthBox(x.class_id, x.bbox, str(i)) for x in g]))
all_gts = [g for s in samples for g in s.gts]
det = ToyDetector()

for k in (1.0, 0.7, 0.6, 0.5):
    chain = AugmentationChain((DimConfig(k),), seed=0)
    found = det([(s.image_id, apply_chain(s.frame, chain)) for s in samples])
    res = mean_average_precision(found, all_gts)
    print(f"k_dim {k:.1f}: mAP {res.map:.3f}  ({len(found)} detections for {len(all_gts)} cones)")

print(res.to_json(indent=1))
