"""Synthetic cone scenes and a brittle contrast detector.

Together they close the augment -> detect -> evaluate -> calibrate loop
without a trained network. The detector fails the same two ways a real one
does under these effects: discs wash out cone pixels, dimming removes the
contrast against the background. It is not meant to be robust.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import InvalidDimensionError, PlacementError
from .evaluate import BBox, Detection, GroundTruthBox, iou
from .frames import Frame

BLUE, YELLOW = 0, 1
CLASS_NAMES = ("blue_cone", "yellow_cone")
CLASS_COLORS = {BLUE: (20, 40, 220), YELLOW: (240, 200, 20)}

_LUMA = np.array([0.299, 0.587, 0.114])
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SceneSpec:
    width: int = 672
    height: int = 376
    n_cones: int = 8
    cone_min: int = 24
    cone_max: int = 64
    background: int = 120
    seed: int = 0
    iou_cap: float = 0.1
    # Same-color cones closer than this would merge into one blob.
    min_gap: int = 2
    max_retries: int = 2000

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidDimensionError(f"scene must be at least 1x1, got {self.width}x{self.height}")
        if not 3 <= self.cone_min <= self.cone_max:
            raise InvalidDimensionError(f"need 3 <= cone_min <= cone_max, got {self.cone_min}..{self.cone_max}")


@dataclass(frozen=True)
class ToyDetectorParams:
    saturation_min: float = 0.2
    contrast_min: float = 40.0
    min_area: int = 30


def _triangle_mask(w: int, h: int) -> np.ndarray:
    # Apex at top-center, base along the bottom edge; pixel-center sampling.
    ys = (np.arange(h) + 0.5)[:, None]
    xs = (np.arange(w) + 0.5)[None, :]
    half = (w / 2.0) * ys / h
    return np.abs(xs - w / 2.0) <= half


def _gap_ok(a, b, gap):
    return (a[2] + gap <= b[0] or b[2] + gap <= a[0] or
            a[3] + gap <= b[1] or b[3] + gap <= a[1])


def generate_scene(spec: SceneSpec):
    """Render ``spec.n_cones`` filled triangles on a flat background.

    Returns ``(frame, ground_truth)``, with ground-truth boxes tight around
    the rendered pixels. Image ids are left as ``""``; callers assign them.
    """
    rng = np.random.default_rng(spec.seed)
    px = np.full((spec.height, spec.width, 3), spec.background, dtype=np.uint8)
    placed = []
    gts = []
    for n in range(spec.n_cones):
        for _ in range(spec.max_retries):
            h = int(rng.integers(spec.cone_min, spec.cone_max + 1))
            w = max(int(round(0.7 * h)), 3)
            cls = int(rng.integers(0, 2))
            if w > spec.width or h > spec.height:
                continue
            x0 = int(rng.integers(0, spec.width - w + 1))
            y0 = int(rng.integers(0, spec.height - h + 1))
            box = (x0, y0, x0 + w, y0 + h)
            bb = BBox(*box)
            if all(iou(bb, BBox(*p)) < spec.iou_cap and _gap_ok(box, p, spec.min_gap) for p in placed):
                break
        else:
            raise PlacementError(f"could not place cone {n + 1} of {spec.n_cones} in "
                                 f"{spec.width}x{spec.height} after {spec.max_retries} tries")
        placed.append(box)
        mask = _triangle_mask(w, h)
        px[y0:y0 + h, x0:x0 + w][mask] = CLASS_COLORS[cls]
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        gts.append(GroundTruthBox(cls, BBox(float(x0 + cols[0]), float(y0 + rows[0]),
                                            float(x0 + cols[-1] + 1), float(y0 + rows[-1] + 1)), ""))
    return Frame(px), gts


def luminance(frame: Frame) -> np.ndarray:
    return frame.pixels.astype(np.float64) @ _LUMA


def toy_detect(frame: Frame, params: ToyDetectorParams = ToyDetectorParams(),
               image_id: str = "") -> list:
    """Detect saturated, high-contrast blobs and label them blue or yellow.

    A pixel is a candidate when its strongest channel exceeds the channel mean
    by more than ``saturation_min`` (as a fraction of 255) and its luminance is
    at least ``contrast_min`` away from the background, estimated as the
    median frame luminance. 8-connected candidate regions of at least
    ``min_area`` pixels are reported; confidence is the region's mean
    contrast divided by 128, clipped to [0, 1].
    """
    px = frame.pixels
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    top = np.maximum(np.maximum(r, g), b).astype(np.float32)
    total = r.astype(np.float32) + g + b
    excess = (top - total / 3.0) / 255.0
    lum = r * np.float32(_LUMA[0]) + g * np.float32(_LUMA[1]) + b * np.float32(_LUMA[2])
    contrast = np.abs(lum - np.median(lum))
    candidate = (excess > params.saturation_min) & (contrast >= params.contrast_min)
    if not candidate.any():
        return []
    is_blue = b >= np.maximum(r, g)
    out = []
    for cls, cls_mask in ((BLUE, candidate & is_blue), (YELLOW, candidate & ~is_blue)):
        labels, n = ndimage.label(cls_mask, structure=_EIGHT_CONNECTED)
        if n == 0:
            continue
        for k, sl in enumerate(ndimage.find_objects(labels), 1):
            member = labels[sl] == k
            area = int(member.sum())
            if area < params.min_area:
                continue
            ys, xs = sl
            mean_contrast = float(contrast[sl][member].astype(np.float64).mean())
            out.append(Detection(
                cls,
                BBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop)),
                float(np.clip(mean_contrast / 128.0, 0.0, 1.0)),
                image_id,
            ))
    return out


class ToyDetector:
    """Detector adapter around :func:`toy_detect`."""

    concurrent_safe = True

    def __init__(self, params: ToyDetectorParams = ToyDetectorParams()):
        self.params = params

    def __call__(self, frames: Iterable) -> list:
        out = []
        for image_id, frame in frames:
            out.extend(toy_detect(frame, self.params, image_id))
        return out

    def __repr__(self):
        return f"ToyDetector({self.params})"
