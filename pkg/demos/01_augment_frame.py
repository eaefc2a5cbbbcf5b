"""
Degrading one frame
===================

Render a toy cone scene, then dim it and add lens droplets. The results are
written as PPM files into ``demo_out/``.
"""

from pathlib import Path

import numpy as np

from wxaug import AugmentationChain, DimConfig, DropletConfig, apply_chain
from wxaug.augment import sample_droplet_field, stage_seed
from wxaug.frames import write_ppm
from wxaug.toyworld import SceneSpec, generate_scene

out = Path("demo_out")
out.mkdir(exist_ok=True)

frame, gts = generate_scene(SceneSpec(seed=3))
print(f"scene {frame.width}x{frame.height} with {len(gts)} cones")
write_ppm(out / "clean.ppm", frame)

# Dimming is a per-channel lookup: round(c * k).
dark = apply_chain(frame, AugmentationChain((DimConfig(0.4),), seed=0))
print("mean level clean %.1f, dimmed %.1f" % (frame.pixels.mean(), dark.pixels.mean()))
write_ppm(out / "dim_0.4.ppm", dark)

# Droplets come from a seeded field of gray discs. The field can be inspected
# before it is drawn.
cfg = DropletConfig(0.8)
chain = AugmentationChain((cfg,), seed=7)
field = sample_droplet_field(frame.width, frame.height, cfg, stage_seed(chain.seed, frame.frame_id, 0))
radii = np.array([d.radius for d in field.discs])
print(f"{len(field.discs)} droplets, radius {radii.min():.1f}..{radii.max():.1f} px")

wet = apply_chain(frame, chain)
changed = np.any(wet.pixels != frame.pixels, axis=2).mean()
print(f"{100 * changed:.1f}% of pixels covered")
write_ppm(out / "droplets_0.8.ppm", wet)

# Same seed, same bytes.
assert apply_chain(frame, chain) == wet

# Stages compose left to right.
both = apply_chain(frame, AugmentationChain((DimConfig(0.6), DropletConfig(0.5)), seed=7))
write_ppm(out / "dim_then_droplets.ppm", both)
print("wrote", sorted(p.name for p in out.glob("*.ppm")))
