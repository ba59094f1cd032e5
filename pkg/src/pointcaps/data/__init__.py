"""Point cloud data: containers, file formats, synthesis, checkpoints."""

from .cloud import PointCloud, normalize, resample
from .formats import (
    FORMAT_PLY,
    FORMAT_XYZ,
    FORMATS,
    CloudFormatError,
    guess_format,
    read_cloud,
    write_cloud,
)
from .synthetic import (
    BARBELL,
    CAPPED_CYLINDER,
    FAMILIES,
    TORUS_ON_BOX,
    WINGED_CROSS,
    SyntheticSpec,
    default_part_counts,
    family_index,
    generate,
    part_count,
)
from .checkpoint import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    load_model,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from .runconfig import RunConfigError, get_bool, parse_config_text, read_config, write_config

__all__ = [
    "BARBELL",
    "CAPPED_CYLINDER",
    "FAMILIES",
    "FORMATS",
    "FORMAT_PLY",
    "FORMAT_XYZ",
    "TORUS_ON_BOX",
    "WINGED_CROSS",
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointShapeError",
    "CheckpointTruncatedError",
    "CheckpointVersionError",
    "CloudFormatError",
    "PointCloud",
    "RunConfigError",
    "SyntheticSpec",
    "default_part_counts",
    "family_index",
    "generate",
    "get_bool",
    "guess_format",
    "load_model",
    "normalize",
    "parse_config_text",
    "part_count",
    "read_checkpoint",
    "read_cloud",
    "read_config",
    "resample",
    "save_model",
    "write_checkpoint",
    "write_cloud",
    "write_config",
]
