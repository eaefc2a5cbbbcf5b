"""
Per-frame latency
=================

Time both effects at camera resolution. Dimming is a table lookup and should
come out well under a millisecond or two; droplets cost more.
"""

from wxaug import DimConfig, DropletConfig, measure_latency
from wxaug.frames import CAMERA_SIZE

w, h = CAMERA_SIZE
for name, stage in [("droplets", DropletConfig(0.5)), ("dimming", DimConfig(0.5))]:
    s = measure_latency(stage, w, h, n_frames=300).as_ms()
    print(f"{name:<9} p50 {s['p50']:.3f} ms  p95 {s['p95']:.3f} ms  max {s['max']:.3f} ms")

# Droplet cost grows with coverage.
for k in (0.2, 0.5, 1.0):
    s = measure_latency(DropletConfig(k), w, h, n_frames=100).as_ms()
    print(f"k_droplet {k:.1f}: p50 {s['p50']:.3f} ms")
