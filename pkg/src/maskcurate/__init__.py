"""Curation of synthetic segmentation data: loss-based pixel filtering and
hardness-aware synthesis re-sampling."""

from maskcurate.errors import (
    ConfigError,
    CurationError,
    DecodeError,
    EmptyDatasetError,
    MissingPairError,
    ShapeError,
    ValidationError,
)
from maskcurate.core_io import (
    CurationConfig,
    DatasetIndex,
    LabelMap,
    LossMap,
    ProbMap,
    SampleRecord,
    read_label_map,
    read_loss_map,
    read_prob_map,
    scan_dataset,
    write_label_map,
    write_loss_map,
    write_prob_map,
)
from maskcurate.stats import (
    ClassAccumulator,
    ClassStatsTable,
    accumulate_image,
    compute_loss_map,
    compute_stats,
    finalize,
    merge,
)
from maskcurate.filtering import FilterReport, filter_dataset, filter_image
from maskcurate.hardness import (
    HardnessRecord,
    RankedMasks,
    mask_hardness,
    rank_masks,
    sample_count,
)
from maskcurate.assemble import (
    SamplingManifest,
    TrainingPlan,
    build_manifest,
    fixed_seed_sequence,
    joint_training_plan,
    pretrain_plan,
    splitmix64,
)

__version__ = "0.1.0"
