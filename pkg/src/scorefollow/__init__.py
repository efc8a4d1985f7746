"""Real-time audio-to-audio score following with structural-mismatch recovery."""

__version__ = "0.1.0"

from .features import (
    FeatureSequence,
    MfccConfig,
    MfccExtractor,
    cosine_distance,
    downsample_lr,
    extract_mfcc,
    load_features,
    load_wav,
    lr_frame_count,
    save_features,
)
from .score import (
    Bar,
    BarAnnotations,
    Part,
    PartTable,
    ScoreReference,
    UNANNOTATED,
    load_annotations,
    load_reference,
    locate,
    save_annotations,
)
from .hr_tracker import HrTracker
from .lr_tracker import LrReport, LrTracker, reliability
from .integrator import (
    Integrator,
    PositionReport,
    TrackerConfig,
    read_reports,
    run_tracking,
    write_reports,
)
from .simulate import (
    EditOp,
    EditScript,
    GroundTruth,
    INSERTED,
    SimParams,
    apply_script,
    generate_script,
)
from .evaluate import EvalResult, evaluate, offline_dtw, offline_forward_positions

__all__ = [
    "FeatureSequence", "MfccConfig", "MfccExtractor", "cosine_distance",
    "downsample_lr", "extract_mfcc", "load_features", "load_wav",
    "lr_frame_count", "save_features",
    "Bar", "BarAnnotations", "Part", "PartTable", "ScoreReference",
    "UNANNOTATED", "load_annotations", "load_reference", "locate",
    "save_annotations",
    "HrTracker", "LrReport", "LrTracker", "reliability",
    "Integrator", "PositionReport", "TrackerConfig", "read_reports",
    "run_tracking", "write_reports",
    "EditOp", "EditScript", "GroundTruth", "INSERTED", "SimParams",
    "apply_script", "generate_script",
    "EvalResult", "evaluate", "offline_dtw", "offline_forward_positions",
]
