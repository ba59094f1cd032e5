"""Point-capsule auto-encoder for 3D point clouds.

Encodes a cloud into a set of latent capsules via dynamic routing,
decodes each capsule into its own surface patch, and supports
capsule-level part segmentation and latent-space shape editing.
"""
from .autodiff import (
    AdamConfig,
    NonFiniteError,
    ParameterStore,
    ShapeError,
    Tensor,
    adam_step,
    no_grad,
)
from .data.checkpoint import (
    CheckpointError,
    load_model,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from .data.cloud import PointCloud, normalize, resample
from .data.formats import CloudFormatError, read_cloud, write_cloud
from .data.synthetic import FAMILIES, SyntheticSpec, generate
from .estimators import (
    CapsulePartSegmenter,
    LatentHingeClassifier,
    PointCapsuleAutoencoder,
)
from .latent import (
    CapsuleSelection,
    ClassifierConfig,
    EmptySelectionError,
    LinearClassifier,
    flatten_latent,
    interpolate_part,
    match_capsules_by_similarity,
    match_part_capsules,
    replace_part,
    unflatten_latent,
)
from .metrics import (
    ChamferResult,
    SegMetrics,
    batch_chamfer_loss,
    capsule_spread,
    chamfer,
    chamfer_fast,
    chamfer_loss,
    seg_accuracy,
    seg_metrics,
)
from .nn.decoder import CapsuleDecoder, DecoderConfig, Reconstruction, sample_grid
from .nn.encoder import CapsuleEncoder, EncoderConfig
from .nn.model import PointCapsuleAE
from .nn.routing import (
    CONV_ABLATION,
    DYNAMIC_ROUTING,
    ROUTING_MODES,
    ConvAblation,
    DynamicRouting,
    RoutingConfig,
    squash,
)
from .partseg import (
    CapsuleLabeling,
    CapsulePartNet,
    PartNetConfig,
    PartNetReport,
    gt_capsule_labels,
    mode_filter,
    nearest_labels,
    segment_points,
    train_partnet,
)
from .training import EvalReport, TrainConfig, TrainReport, eval_ae, train_ae

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "CapsuleDecoder",
    "CapsuleEncoder",
    "CapsuleLabeling",
    "CapsulePartNet",
    "CapsulePartSegmenter",
    "CapsuleSelection",
    "ChamferResult",
    "CheckpointError",
    "ClassifierConfig",
    "CloudFormatError",
    "CONV_ABLATION",
    "ConvAblation",
    "DecoderConfig",
    "DYNAMIC_ROUTING",
    "DynamicRouting",
    "EmptySelectionError",
    "EncoderConfig",
    "EvalReport",
    "FAMILIES",
    "LatentHingeClassifier",
    "LinearClassifier",
    "NonFiniteError",
    "ParameterStore",
    "PartNetConfig",
    "PartNetReport",
    "PointCapsuleAE",
    "PointCapsuleAutoencoder",
    "PointCloud",
    "Reconstruction",
    "ROUTING_MODES",
    "RoutingConfig",
    "SegMetrics",
    "ShapeError",
    "SyntheticSpec",
    "Tensor",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "batch_chamfer_loss",
    "capsule_spread",
    "chamfer",
    "chamfer_fast",
    "chamfer_loss",
    "eval_ae",
    "flatten_latent",
    "generate",
    "gt_capsule_labels",
    "interpolate_part",
    "load_model",
    "match_capsules_by_similarity",
    "match_part_capsules",
    "mode_filter",
    "nearest_labels",
    "no_grad",
    "normalize",
    "read_checkpoint",
    "read_cloud",
    "replace_part",
    "resample",
    "sample_grid",
    "save_model",
    "seg_accuracy",
    "seg_metrics",
    "segment_points",
    "squash",
    "train_ae",
    "train_partnet",
    "unflatten_latent",
    "write_checkpoint",
    "write_cloud",
]
