"""Real-time droplet and low-light degradation of camera frames.

The kernels live in :mod:`wxaug.augment`, mAP evaluation in
:mod:`wxaug.evaluate`, parameter calibration in :mod:`wxaug.calibrate`.
:mod:`wxaug.toyworld` provides synthetic scenes and a toy detector so the
whole loop runs without a trained network.
"""

__version__ = "0.1.0"

from .augment import (
    AugmentationChain,
    DimConfig,
    Disc,
    DropletConfig,
    DropletField,
    LatencyStats,
    apply_chain,
    apply_dimming,
    apply_droplets,
    derive_seed,
    load_chain,
    measure_latency,
    sample_droplet_field,
)
from .calibrate import (
    SEVERITY_TABLE,
    CalibrationCurve,
    CurvePoint,
    SeverityMapping,
    build_severity_mapping,
    fit_monotone,
    invert_curve,
    run_sweep,
)
from .evaluate import (
    BBox,
    Detection,
    EvalResult,
    GroundTruthBox,
    average_precision,
    iou,
    match_detections,
    mean_average_precision,
)
from .frames import Frame, decode_ppm, encode_ppm, new_frame, random_frame
