"""Frame-level sound event detection toolkit.

Rasterizes strong labels onto a uniform frame grid, resamples encoder
embeddings to one canonical frame count, builds ensemble distillation targets
and the frame-level distillation loss, balances sampling by inverse label
active time, augments spectrograms, and evaluates detections exactly with a
threshold-independent intersection-criterion score, onset F-measure, and the
almost-stochastic-order significance test.
"""

__version__ = "0.1.0"

from .augment import AugmentConfig, Spectrogram, filter_augment, freq_mixstyle, freq_warp, mixup
from .distill import (
    KdConfig,
    ProbeConfig,
    SamplingWeights,
    ensemble_average,
    ensemble_soft_targets,
    kd_loss,
    kd_loss_grad,
    label_frequencies,
    mixup_with_targets,
    probe_fit,
    sampling_weights,
    weighted_sample,
)
from .errors import (
    ContractError,
    FormatError,
    NumericError,
    SedkitError,
    SizeError,
    TrainingError,
    ValidationError,
    VocabularyError,
)
from .evalaux import (
    AsoConfig,
    AsoResult,
    OnsetEvalConfig,
    OnsetFScores,
    aso,
    median_filter,
    onset_f,
    violation_ratio,
)
from .psds import (
    OperatingPoint,
    PsdsParams,
    PsdsResult,
    change_point_thresholds,
    intersection_match,
    per_class_roc,
    psds,
)
from .psds_oracle import psds_brute_force, roc_points_brute_force
from .resample import (
    CANONICAL_FRAMES,
    EmbeddingSequence,
    LinearHead,
    ScheduleConfig,
    adaptive_avg_pool,
    head_forward,
    linear_interp,
    lr_at,
    resample,
)
from .timeline import (
    ClassVocabulary,
    ClipAnnotations,
    Event,
    FrameGrid,
    ScoreMatrix,
    TargetMatrix,
    concat_slices,
    crop_random,
    decode_events,
    project_vocabulary,
    rasterize_events,
)
