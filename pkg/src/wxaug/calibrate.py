"""Parameter sweeps, monotone curve fitting and inversion to severity targets.

A sweep augments a dataset at each grid value of one control parameter,
runs a detector and records mAP; repeats use independent derived seeds and
are averaged. The averaged curve is made monotone by pool-adjacent-violators
and then inverted by piecewise-linear interpolation, which replaces reading
a target mAP off a plotted curve by eye.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .augment import AugmentationChain, DimConfig, DropletConfig, apply_chain, derive_seed
from .errors import InvalidInputError, InvalidParameterError, ParseError, SweepError
from .evaluate import mean_average_precision

DROPLETS = "droplets"
DIM = "dim"
LOW_LIGHT = "low_light"

NON_INCREASING = "non-increasing"
NON_DECREASING = "non-decreasing"

DIRECTION = {DROPLETS: NON_INCREASING, DIM: NON_DECREASING}
IDENTITY_PARAM = {DROPLETS: 0.0, DIM: 1.0}
CONDITION_FOR_KIND = {DROPLETS: DROPLETS, DIM: LOW_LIGHT}

DEFAULT_GRID = tuple(round(i / 10, 10) for i in range(11))
DEFAULT_REPEATS = 5

# Reference mAP points measured with YOLOv3-tiny on simulator output.
# Metadata only; they need the original datasets and network to reproduce.
SIMULATED_IDEAL_MAP = 0.715
REFERENCE_DROPLET_ANCHOR = (0.55, 0.490)  # (k_droplet, mAP)
REFERENCE_DIM_ANCHOR = (0.78, 0.273)  # (k_dim, mAP)
REAL_VS_SIM_OFFSET = 0.08


@dataclass(frozen=True)
class SeverityRow:
    condition: str
    severity: int
    target_map: float
    description: str


# Real-world test sets and their measured mAP; severity 0 is the shared
# good-weather baseline.
IDEAL_REAL_MAP = 0.793
SEVERITY_TABLE = (
    SeverityRow(DROPLETS, 0, IDEAL_REAL_MAP, "Real world, good weather"),
    SeverityRow(DROPLETS, 1, 0.796, "Very light droplets, occasional minimal impact upon object visibility"),
    SeverityRow(DROPLETS, 2, 0.763, "Light droplets, object visibility occasionally more difficult"),
    SeverityRow(DROPLETS, 3, 0.730, "Moderate droplets, object visibility commonly impaired"),
    SeverityRow(DROPLETS, 4, 0.587, "Heavy droplets, object visibility frequently severely impaired"),
    SeverityRow(LOW_LIGHT, 0, IDEAL_REAL_MAP, "Real world, good weather"),
    SeverityRow(LOW_LIGHT, 1, 0.639, "Late afternoon"),
    SeverityRow(LOW_LIGHT, 2, 0.273, "Sunset"),
    SeverityRow(LOW_LIGHT, 3, 0.043, "Dusk"),
    SeverityRow(LOW_LIGHT, 4, 0.010, "Night"),
)


def severity_rows(condition: str, table: Sequence[SeverityRow] = SEVERITY_TABLE) -> list:
    rows = sorted((r for r in table if r.condition == condition), key=lambda r: r.severity)
    if len({r.severity for r in rows}) != len(rows):
        raise InvalidInputError(f"duplicate severities for {condition}")
    return rows


@dataclass(frozen=True)
class CurvePoint:
    param: float
    map_mean: float
    map_std: float = 0.0
    n_runs: int = 1


@dataclass(frozen=True)
class RunRecord:
    param: float
    repeat: int
    seed: int
    map: float


@dataclass(frozen=True)
class CalibrationCurve:
    stage_kind: str
    points: tuple
    direction: str = ""
    baseline_map: Optional[float] = None
    runs: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.stage_kind not in DIRECTION:
            raise InvalidParameterError(f"unknown stage kind {self.stage_kind!r}")
        if not self.direction:
            object.__setattr__(self, "direction", DIRECTION[self.stage_kind])
        object.__setattr__(self, "points", tuple(self.points))
        params = [p.param for p in self.points]
        if any(b <= a for a, b in zip(params, params[1:])):
            raise InvalidInputError("curve params must be strictly increasing")
        for p in self.points:
            if not 0.0 <= p.map_mean <= 1.0 or p.n_runs < 1:
                raise InvalidInputError(f"bad curve point {p}")

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points], dtype=np.float64)

    @property
    def means(self) -> np.ndarray:
        return np.array([p.map_mean for p in self.points], dtype=np.float64)

    def is_monotone(self) -> bool:
        d = np.diff(self.means)
        return bool(np.all(d <= 0) if self.direction == NON_INCREASING else np.all(d >= 0))

    def interpolate(self, param: float) -> float:
        """mAP at ``param`` by linear interpolation, constant beyond the ends."""
        return float(np.interp(param, self.params, self.means))


def _stage_for(stage_kind: str, param: float, fixed_cfg=None):
    if stage_kind == DROPLETS:
        base = fixed_cfg if isinstance(fixed_cfg, DropletConfig) else DropletConfig()
        return base.with_k(param)
    if stage_kind == DIM:
        return DimConfig(param)
    raise InvalidParameterError(f"unknown stage kind {stage_kind!r}")


def _evaluate_cell(samples, detector, stage, chain_seed, iou_thresh):
    chain = AugmentationChain((stage,), chain_seed)
    frames = [(s.image_id, apply_chain(s.frame, chain)) for s in samples]
    dets = detector(frames)
    gts = [g for s in samples for g in s.gts]
    return mean_average_precision(dets, gts, iou_thresh).map


def _run_cell(args):
    samples, detector, stage_kind, param, repeat, seed, fixed_cfg, iou_thresh = args
    try:
        return _evaluate_cell(samples, detector, _stage_for(stage_kind, param, fixed_cfg), seed, iou_thresh)
    except Exception as exc:
        raise SweepError(param, repeat, exc) from exc


def _as_samples(dataset):
    if hasattr(dataset, "samples"):
        return dataset.samples()
    return list(dataset)


def run_sweep(dataset, detector, stage_kind: str, grid: Sequence[float] = DEFAULT_GRID,
              repeats: int = DEFAULT_REPEATS, base_seed: int = 0, fixed_cfg=None,
              iou_thresh: float = 0.5, jobs: int = 1) -> CalibrationCurve:
    """Sweep one control parameter and average mAP over seeded repeats.

    ``dataset`` is a DatasetManifest or a list of Samples. ``detector`` is
    called with a list of ``(image_id, Frame)`` and returns Detections.
    Repeat ``r`` uses chain seed ``derive_seed(base_seed, r)``; each image's
    frame id is its position in the dataset. Per-run records are kept on
    ``curve.runs``. Runs with no detections count as mAP 0.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise InvalidParameterError("grid must not be empty")
    if any(not 0.0 <= g <= 1.0 for g in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError("grid values must lie in [0, 1] and strictly increase")
    if repeats < 1:
        raise InvalidParameterError(f"repeats must be >= 1, got {repeats}")
    _stage_for(stage_kind, grid[0], fixed_cfg)
    samples = _as_samples(dataset)
    if not samples:
        raise InvalidInputError("dataset is empty")

    cells = [(param, r, derive_seed(base_seed, r)) for param in grid for r in range(repeats)]
    args = [(samples, detector, stage_kind, p, r, s, fixed_cfg, iou_thresh) for p, r, s in cells]
    if jobs > 1 and getattr(detector, "concurrent_safe", False):
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            maps = list(pool.map(_run_cell, args))
    else:
        maps = [_run_cell(a) for a in args]

    runs = tuple(RunRecord(p, r, s, float(m)) for (p, r, s), m in zip(cells, maps))
    points = []
    for i, param in enumerate(grid):
        vals = np.array(maps[i * repeats:(i + 1) * repeats], dtype=np.float64)
        points.append(CurvePoint(param, float(vals.mean()), float(vals.std()), repeats))

    identity = IDENTITY_PARAM[stage_kind]
    if identity in grid:
        baseline = points[grid.index(identity)].map_mean
    else:
        baseline = float(_run_cell((samples, detector, stage_kind, identity, 0,
                                    derive_seed(base_seed, 0), fixed_cfg, iou_thresh)))
    return CalibrationCurve(stage_kind, tuple(points), DIRECTION[stage_kind], baseline, runs)


def pool_adjacent_violators(values: Sequence[float], weights: Optional[Sequence[float]] = None,
                            increasing: bool = True) -> np.ndarray:
    """L2 isotonic regression of ``values`` by pool-adjacent-violators."""
    y = np.asarray(values, dtype=np.float64)
    if y.size <= 1:
        return y.copy()
    if not increasing:
        return -pool_adjacent_violators(-y, weights, True)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    # Each block: [weighted mean, total weight, length]
    blocks = []
    for v, wt in zip(y, w):
        blocks.append([v, wt, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2, n2 = blocks.pop()
            m1, w1, n1 = blocks[-1]
            tot = w1 + w2
            blocks[-1] = [(m1 * w1 + m2 * w2) / tot, tot, n1 + n2]
    return np.concatenate([np.full(n, m) for m, _, n in blocks])


def fit_monotone(curve: CalibrationCurve) -> CalibrationCurve:
    fitted = pool_adjacent_violators(curve.means, increasing=curve.direction == NON_DECREASING)
    pts = tuple(replace(p, map_mean=float(m)) for p, m in zip(curve.points, fitted))
    return replace(curve, points=pts)


@dataclass(frozen=True)
class Inversion:
    param: float
    clamped: bool


def invert_curve(curve: CalibrationCurve, target_map: float) -> Inversion:
    """Parameter whose interpolated mAP equals ``target_map``.

    Knots are walked from the weakest degradation (identity end) to the
    strongest, so a flat stretch at the target resolves to its weakest end.
    Targets outside the curve's range clamp to the nearest end.
    """
    if not curve.points:
        raise InvalidInputError("cannot invert an empty curve")
    if not curve.is_monotone():
        raise InvalidInputError("curve is not monotone in its declared direction; fit it first")
    pts = list(curve.points)
    if curve.direction == NON_DECREASING:
        pts.reverse()
    # along pts, map_mean is non-increasing
    if target_map > pts[0].map_mean:
        return Inversion(pts[0].param, True)
    if target_map < pts[-1].map_mean:
        return Inversion(pts[-1].param, True)
    for a, b in zip(pts, pts[1:]):
        if a.map_mean == target_map:
            return Inversion(a.param, False)
        if a.map_mean > target_map > b.map_mean:
            t = (a.map_mean - target_map) / (a.map_mean - b.map_mean)
            return Inversion(a.param + t * (b.param - a.param), False)
    return Inversion(pts[-1].param, False)


@dataclass(frozen=True)
class MappingRow:
    condition: str
    severity: int
    target_map: float
    param: float
    achieved_map_interp: float
    clamped: bool


@dataclass(frozen=True)
class SeverityMapping:
    condition: str
    stage_kind: str
    rows: tuple

    def to_dict(self):
        return {"condition": self.condition, "stage_kind": self.stage_kind,
                "rows": [asdict(r) for r in self.rows]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @property
    def any_clamped(self) -> bool:
        return any(r.clamped for r in self.rows)


def build_severity_mapping(curve: CalibrationCurve, table: Sequence[SeverityRow] = SEVERITY_TABLE,
                           condition: Optional[str] = None) -> SeverityMapping:
    expected = CONDITION_FOR_KIND[curve.stage_kind]
    condition = condition or expected
    if condition != expected:
        raise InvalidInputError(f"a {curve.stage_kind} curve cannot map {condition} severities")
    identity = IDENTITY_PARAM[curve.stage_kind]
    rows = []
    for r in severity_rows(condition, table):
        if r.severity == 0:
            inv = Inversion(identity, False)
        else:
            inv = invert_curve(curve, r.target_map)
        rows.append(MappingRow(condition, r.severity, r.target_map, inv.param,
                               curve.interpolate(inv.param), inv.clamped))
    return SeverityMapping(condition, curve.stage_kind, tuple(rows))


CSV_HEADER = ("param", "map_mean", "map_std", "n_runs")


def curve_to_csv(curve: CalibrationCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in curve.points:
        w.writerow(["%.9f" % p.param, "%.9f" % p.map_mean, "%.9f" % p.map_std, p.n_runs])
    return buf.getvalue()


def curve_from_csv(text: str, stage_kind: str) -> CalibrationCurve:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ParseError(f"curve CSV must start with header {','.join(CSV_HEADER)}", 1)
    pts = []
    for n, row in enumerate(rows[1:], 2):
        if not row:
            continue
        try:
            pts.append(CurvePoint(float(row[0]), float(row[1]), float(row[2]), int(row[3])))
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), n) from None
    identity = IDENTITY_PARAM.get(stage_kind)
    baseline = next((p.map_mean for p in pts if p.param == identity), None)
    return CalibrationCurve(stage_kind, tuple(pts), DIRECTION.get(stage_kind, ""), baseline)


def runs_to_jsonl(runs: Sequence[RunRecord]) -> str:
    return "".join(json.dumps(asdict(r)) + "\n" for r in runs)


def runs_from_jsonl(text: str) -> list:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(RunRecord(float(d["param"]), int(d["repeat"]), int(d["seed"]), float(d["map"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(str(exc), n) from None
    return out


def curve_from_runs(runs: Sequence[RunRecord], stage_kind: str) -> CalibrationCurve:
    """Rebuild means and population stds from per-run records."""
    by_param = {}
    for r in runs:
        by_param.setdefault(r.param, []).append(r.map)
    pts = tuple(CurvePoint(p, float(np.mean(v)), float(np.std(v)), len(v))
                for p, v in sorted(by_param.items()))
    return CalibrationCurve(stage_kind, pts)
