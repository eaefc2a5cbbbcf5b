"""Droplet and dimming kernels and their seeded composition.

Rounding in both kernels is round-half-up followed by a clamp to [0, 255].

Randomness comes from numpy's PCG64 bit generator wrapped in
``numpy.random.Generator``. A droplet field of N discs is drawn as one
``Generator.random((N, 5))`` call, so per disc the uniform draws are taken
in the order cx, cy, radius, u, gray.

Per-frame seeds are derived with :func:`derive_seed`: BLAKE2b with an 8-byte
digest over the little-endian u64 encoding of each input word, read back as
a little-endian u64.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import FieldMismatchError, InvalidDimensionError, InvalidParameterError
from .frames import Frame, random_frame

_U64 = (1 << 64) - 1


def derive_seed(*words: int) -> int:
    """Mix any number of u64 words into one u64 seed."""
    packed = b"".join(struct.pack("<Q", int(w) & _U64) for w in words)
    return int.from_bytes(hashlib.blake2b(packed, digest_size=8).digest(), "little")


def _round_half_up(x):
    return np.floor(x + 0.5)


@dataclass(frozen=True)
class DimConfig:
    k_dim: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.k_dim <= 1.0:
            raise InvalidParameterError(f"k_dim must lie in [0, 1], got {self.k_dim}")


@dataclass(frozen=True)
class DropletConfig:
    k_droplet: float = 0.0
    fog_coef: float = 0.4
    density: float = 80.0
    radius_jitter: float = 0.5
    gray_low: int = 160
    gray_high: int = 220

    def __post_init__(self):
        if not 0.0 <= self.k_droplet <= 1.0:
            raise InvalidParameterError(f"k_droplet must lie in [0, 1], got {self.k_droplet}")
        if not 0.0 < self.fog_coef <= 1.0:
            raise InvalidParameterError(f"fog_coef must lie in (0, 1], got {self.fog_coef}")
        if self.density < 0:
            raise InvalidParameterError(f"density must be >= 0, got {self.density}")
        if not 0.0 <= self.radius_jitter <= 1.0:
            raise InvalidParameterError(f"radius_jitter must lie in [0, 1], got {self.radius_jitter}")
        if not 0 <= self.gray_low <= self.gray_high <= 255:
            raise InvalidParameterError(
                f"need 0 <= gray_low <= gray_high <= 255, got {self.gray_low}/{self.gray_high}"
            )

    def with_k(self, k_droplet: float) -> "DropletConfig":
        return DropletConfig(**{**asdict(self), "k_droplet": k_droplet})


class Disc(NamedTuple):
    cx: float
    cy: float
    radius: float
    alpha: float
    gray: int


@dataclass(frozen=True)
class DropletField:
    discs: tuple
    source_seed: int
    source_dims: tuple

    def to_dict(self):
        return {
            "source_seed": self.source_seed,
            "source_dims": list(self.source_dims),
            "discs": [d._asdict() for d in self.discs],
        }

    @classmethod
    def from_dict(cls, d):
        discs = tuple(Disc(float(x["cx"]), float(x["cy"]), float(x["radius"]),
                           float(x["alpha"]), int(x["gray"])) for x in d["discs"])
        return cls(discs, int(d["source_seed"]), tuple(d["source_dims"]))


Stage = Union[DimConfig, DropletConfig]


@dataclass(frozen=True)
class AugmentationChain:
    stages: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        for s in self.stages:
            if not isinstance(s, (DimConfig, DropletConfig)):
                raise InvalidParameterError(f"unknown stage {s!r}")

    def to_dict(self):
        out = []
        for s in self.stages:
            if isinstance(s, DimConfig):
                out.append({"type": "dim", **asdict(s)})
            else:
                out.append({"type": "droplets", **asdict(s)})
        return {"seed": self.seed, "stages": out}

    @classmethod
    def from_dict(cls, d) -> "AugmentationChain":
        if not isinstance(d, dict):
            raise InvalidParameterError("chain config must be a JSON object")
        extra = set(d) - {"seed", "stages"}
        if extra:
            raise InvalidParameterError(f"unknown chain keys: {sorted(extra)}")
        stages = []
        for i, st in enumerate(d.get("stages", [])):
            st = dict(st)
            kind = st.pop("type", None)
            if kind == "dim":
                cls_ = DimConfig
            elif kind == "droplets":
                cls_ = DropletConfig
            else:
                raise InvalidParameterError(f"stage {i}: unknown type {kind!r}")
            allowed = set(cls_.__dataclass_fields__)
            extra = set(st) - allowed
            if extra:
                raise InvalidParameterError(f"stage {i}: unknown keys {sorted(extra)}")
            stages.append(cls_(**st))
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= _U64:
            raise InvalidParameterError(f"seed must be a u64 integer, got {seed!r}")
        return cls(tuple(stages), seed)


def load_chain(path) -> AugmentationChain:
    with open(path) as fh:
        return AugmentationChain.from_dict(json.load(fh))


def save_chain(path, chain: AugmentationChain) -> None:
    with open(path, "w") as fh:
        json.dump(chain.to_dict(), fh, indent=2)


def apply_dimming(frame: Frame, cfg: DimConfig) -> Frame:
    """Scale every channel by ``cfg.k_dim``."""
    if not isinstance(cfg, DimConfig):
        cfg = DimConfig(float(cfg))
    if cfg.k_dim == 1.0:
        return frame.copy()
    lut = np.clip(_round_half_up(np.arange(256, dtype=np.float64) * cfg.k_dim), 0, 255).astype(np.uint8)
    return frame.with_pixels(_lookup(frame.pixels, lut))


def _lookup(pixels: np.ndarray, lut: np.ndarray) -> np.ndarray:
    # Look bytes up two at a time through a 65536-entry table; about twice as
    # fast as a byte-wise take. High byte maps to high byte, so endianness
    # does not matter.
    flat = np.ascontiguousarray(pixels).reshape(-1)
    out = np.empty_like(flat)
    n = flat.size & ~1
    if n:
        wide = lut.astype(np.uint16)
        lut16 = ((wide[:, None] << 8) | wide[None, :]).reshape(-1)
        np.take(lut16, flat[:n].view(np.uint16), out=out[:n].view(np.uint16))
    if n < flat.size:
        out[n:] = lut[flat[n:]]
    return out.reshape(pixels.shape)


def droplet_base_radius(width: int, height: int, fog_coef: float) -> int:
    return max(int(_round_half_up(fog_coef * min(width, height) / 10.0)), 2)


def droplet_count(width: int, height: int, density: float) -> int:
    return int(_round_half_up(density * width * height / 1e6))


def sample_droplet_field(width: int, height: int, cfg: DropletConfig, seed: int) -> DropletField:
    """Draw a reproducible set of translucent discs for a ``width`` x ``height`` frame.

    Disc alphas are ``k_droplet * u`` with ``u ~ U(0.5, 1)``. The ``u`` draws do
    not depend on ``k_droplet``, so resampling with the same seed and a larger
    ``k_droplet`` scales every alpha by the same factor.
    """
    if int(width) < 1 or int(height) < 1:
        raise InvalidDimensionError(f"frame dimensions must be >= 1, got {width}x{height}")
    r0 = droplet_base_radius(width, height, cfg.fog_coef)
    n = droplet_count(width, height, cfg.density)
    draws = np.random.Generator(np.random.PCG64(int(seed) & _U64)).random((n, 5))
    r_lo = (1.0 - cfg.radius_jitter) * r0
    r_hi = (1.0 + cfg.radius_jitter) * r0
    span = cfg.gray_high - cfg.gray_low + 1
    discs = []
    for ucx, ucy, ur, ua, ug in draws:
        discs.append(Disc(
            cx=float(ucx * width),
            cy=float(ucy * height),
            radius=max(float(r_lo + ur * (r_hi - r_lo)), 1.0),
            alpha=float(cfg.k_droplet * (0.5 + 0.5 * ua)),
            gray=min(cfg.gray_low + int(ug * span), cfg.gray_high),
        ))
    return DropletField(tuple(discs), int(seed) & _U64, (int(width), int(height)))


def disc_mask(disc: Disc, width: int, height: int):
    """Return ``(y0, x0, mask)`` for the pixels covered by ``disc``.

    A pixel is covered when its center ``(x + 0.5, y + 0.5)`` lies within
    ``radius`` of the disc center. ``mask`` is None when nothing is covered.
    """
    x0 = max(int(np.floor(disc.cx - disc.radius)), 0)
    x1 = min(int(np.ceil(disc.cx + disc.radius)) + 1, width)
    y0 = max(int(np.floor(disc.cy - disc.radius)), 0)
    y1 = min(int(np.ceil(disc.cy + disc.radius)) + 1, height)
    if x0 >= x1 or y0 >= y1:
        return y0, x0, None
    dx = np.arange(x0, x1, dtype=np.float64) + 0.5 - disc.cx
    dy = np.arange(y0, y1, dtype=np.float64) + 0.5 - disc.cy
    mask = dy[:, None] ** 2 + dx[None, :] ** 2 <= disc.radius * disc.radius
    if not mask.any():
        return y0, x0, None
    return y0, x0, mask


def apply_droplets(frame: Frame, field: DropletField) -> Frame:
    """Alpha-blend each disc's gray level over the frame, in list order. No blur."""
    w, h = frame.width, frame.height
    if tuple(field.source_dims) != (w, h):
        raise FieldMismatchError(f"field sampled for {tuple(field.source_dims)}, frame is {(w, h)}")
    out = frame.pixels.copy()
    for disc in field.discs:
        if disc.alpha <= 0.0:
            continue
        y0, x0, mask = disc_mask(disc, w, h)
        if mask is None:
            continue
        region = out[y0:y0 + mask.shape[0], x0:x0 + mask.shape[1]]
        src = region[mask].astype(np.float64)
        blended = _round_half_up((1.0 - disc.alpha) * src + disc.alpha * disc.gray)
        region[mask] = np.clip(blended, 0, 255).astype(np.uint8)
    return frame.with_pixels(out)


def stage_seed(chain_seed: int, frame_id: int, stage_index: int) -> int:
    return derive_seed(chain_seed, frame_id, stage_index)


def apply_stage(frame: Frame, stage: Stage, seed: int) -> Frame:
    if isinstance(stage, DimConfig):
        return apply_dimming(frame, stage)
    if stage.k_droplet == 0.0:
        return frame.copy()
    fld = sample_droplet_field(frame.width, frame.height, stage, seed)
    return apply_droplets(frame, fld)


def apply_chain(frame: Frame, chain: AugmentationChain) -> Frame:
    """Apply ``chain.stages`` in order.

    Droplet stage ``i`` is seeded with ``derive_seed(chain.seed, frame.frame_id, i)``,
    so a given frame id always gets the same droplets while consecutive frames differ.
    """
    out = frame
    for i, stage in enumerate(chain.stages):
        out = apply_stage(out, stage, stage_seed(chain.seed, frame.frame_id, i))
    return out if out is not frame else frame.copy()


@dataclass(frozen=True)
class LatencyStats:
    p50: float
    p95: float
    max: float
    n: int = 0

    @classmethod
    def from_samples(cls, samples_us: Sequence[float]) -> "LatencyStats":
        arr = np.asarray(samples_us, dtype=np.float64)
        if arr.size == 0:
            return cls(0.0, 0.0, 0.0, 0)
        p50, p95 = np.percentile(arr, [50, 95])
        return cls(float(p50), float(p95), float(arr.max()), int(arr.size))

    def as_ms(self) -> dict:
        return {"p50": self.p50 / 1e3, "p95": self.p95 / 1e3, "max": self.max / 1e3}


def measure_latency(stage, width: int, height: int, n_frames: int, seed: int = 0,
                    pool_size: int = 8) -> LatencyStats:
    """Time ``stage`` over ``n_frames`` calls on random frames; results in microseconds.

    ``stage`` is a DimConfig, a DropletConfig or an AugmentationChain. Droplet
    timings include sampling the field, since that happens once per frame in use.
    """
    if n_frames < 1:
        raise InvalidParameterError(f"n_frames must be >= 1, got {n_frames}")
    if isinstance(stage, (DimConfig, DropletConfig)):
        chain = AugmentationChain((stage,), seed)
    elif isinstance(stage, AugmentationChain):
        chain = stage
    else:
        raise InvalidParameterError(f"cannot time {stage!r}")
    rng = np.random.default_rng(seed)
    pool = [random_frame(width, height, rng) for _ in range(min(pool_size, n_frames))]
    samples = np.empty(n_frames, dtype=np.float64)
    clock = time.perf_counter_ns
    for i in range(n_frames):
        f = pool[i % len(pool)]
        f.frame_id = i
        t0 = clock()
        apply_chain(f, chain)
        samples[i] = (clock() - t0) / 1e3
    return LatencyStats.from_samples(samples)
