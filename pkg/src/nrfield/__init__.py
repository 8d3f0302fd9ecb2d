"""Neural field representations for scientific data on the CPU.

Fit coordinate networks (plain MLPs, positional encodings, sinusoidal
networks, multiplicative filter networks, and multiresolution hash
encodings) to images, point clouds, time-dependent simulation fields, and
signed-distance functions, then evaluate, compress, and reconstruct from
them.  Everything runs in float64 on a small reverse-mode tape; results are
bitwise reproducible for a fixed seed.
"""

from .autodiff import Adam, NumericOverflowError, Tape, Tensor, grad_check
from .config import ConfigError, load_run_config, model_config_from, train_config_from
from .fielddata import (
    DataError,
    FieldDataset,
    TetMesh,
    build_box_tetmesh,
    dataset_from_tetmesh,
    image_to_dataset,
    load_pgm,
    load_point_field,
    load_tetmesh,
    normalize_io,
    write_pgm,
    write_point_field,
    write_tetmesh,
)
from .metrics import (
    EvalReport,
    compression_report,
    evaluate,
    grid_validation,
    profile_along_polyline,
    rmse,
    snr_psnr,
    vnorm_rmse,
)
from .models import (
    ARCHITECTURES,
    CorruptCheckpointError,
    EncodingSpec,
    Model,
    ModelConfig,
    ModelConfigError,
    NormState,
    build_model,
    checkpoint_load,
    checkpoint_nbytes,
    checkpoint_save,
    default_config,
)
from .sdf import (
    SdfCrossings,
    SdfSampleSet,
    Transform,
    TriMesh,
    brute_force_distance,
    crossings_to_dataset,
    distance_error_stats,
    extract_zero_crossings,
    load_trimesh,
    make_icosphere,
    rescale_to_unit_cube,
    sample_sdf_training_set,
    sample_set_to_dataset,
    scenario_counts,
    signed_distance,
    signed_distance_batch,
)
from .training import (
    LossTrace,
    TrainConfig,
    TrainingDiverged,
    expected_visits,
    smooth_trace,
    train,
    write_trace,
)

__version__ = "1.0.0"

__all__ = [
    "Adam",
    "ARCHITECTURES",
    "ConfigError",
    "CorruptCheckpointError",
    "DataError",
    "EncodingSpec",
    "EvalReport",
    "FieldDataset",
    "Model",
    "ModelConfig",
    "ModelConfigError",
    "NormState",
    "NumericOverflowError",
    "SdfCrossings",
    "SdfSampleSet",
    "Tape",
    "Tensor",
    "TetMesh",
    "TrainConfig",
    "LossTrace",
    "write_trace",
    "TrainingDiverged",
    "Transform",
    "TriMesh",
    "brute_force_distance",
    "build_box_tetmesh",
    "build_model",
    "checkpoint_load",
    "checkpoint_nbytes",
    "checkpoint_save",
    "compression_report",
    "crossings_to_dataset",
    "dataset_from_tetmesh",
    "default_config",
    "distance_error_stats",
    "evaluate",
    "expected_visits",
    "extract_zero_crossings",
    "grad_check",
    "grid_validation",
    "image_to_dataset",
    "load_pgm",
    "load_point_field",
    "load_run_config",
    "load_tetmesh",
    "load_trimesh",
    "make_icosphere",
    "model_config_from",
    "normalize_io",
    "profile_along_polyline",
    "rescale_to_unit_cube",
    "rmse",
    "sample_sdf_training_set",
    "sample_set_to_dataset",
    "scenario_counts",
    "signed_distance",
    "signed_distance_batch",
    "smooth_trace",
    "snr_psnr",
    "train",
    "train_config_from",
    "vnorm_rmse",
    "write_pgm",
    "write_point_field",
    "write_tetmesh",
]
