"""
Calibrating an effect against mAP
=================================

Sweep k_dim on toy scenes, fit a monotone curve and look up the setting that
reproduces each low-light severity. Takes a few seconds.
"""

from dataclasses import replace

from wxaug import build_severity_mapping, fit_monotone, invert_curve, run_sweep
from wxaug.calibrate import DIM, DROPLETS, curve_to_csv
from wxaug.dataset import Sample
from wxaug.toyworld import SceneSpec, ToyDetector, generate_scene

# Scenes come back with an empty image_id on their boxes; tag them.
samples = []
for i in range(12):
    frame, gts = generate_scene(SceneSpec(seed=i))
    samples.append(Sample(str(i), frame, [replace(g, image_id=str(i)) for g in gts]))
det = ToyDetector()

grid = [0.3, 0.4, 0.5, 0.55, 0.6, 0.65, 0.7, 0.8, 1.0]
curve = run_sweep(samples, det, DIM, grid, repeats=2)
print(curve_to_csv(curve))

fitted = fit_monotone(curve)
inv = invert_curve(fitted, 0.5)
print(f"mAP 0.5 <- k_dim {inv.param:.3f}")

mapping = build_severity_mapping(fitted)
for row in mapping.rows:
    flag = "  (clamped)" if row.clamped else ""
    print(f"S{row.severity}: target {row.target_map:.3f}  k_dim {row.param:.3f}{flag}")

# Droplets barely bother the toy detector, so most targets clamp.
drops = fit_monotone(run_sweep(samples, det, DROPLETS, [0.0, 0.5, 1.0], repeats=2))
print("droplet curve:", [round(float(m), 3) for m in drops.means])
print("any clamped:", build_severity_mapping(drops).any_clamped)
