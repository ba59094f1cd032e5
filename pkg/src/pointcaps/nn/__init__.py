"""Network modules: encoder, routing, decoder, assembled auto-encoder."""

from .encoder import CapsuleEncoder, EncoderConfig
from .routing import (
    CONV_ABLATION,
    DYNAMIC_ROUTING,
    ROUTING_MODES,
    ConvAblation,
    DynamicRouting,
    RoutingConfig,
    RoutingState,
    squash,
)
from .decoder import (
    FIXED_SEED,
    GRID_MODES,
    RESAMPLE_PER_FORWARD,
    CapsuleDecoder,
    DecoderConfig,
    PatchGrid,
    Reconstruction,
    sample_grid,
)
from .layers import BatchNorm, Linear, glorot_uniform
from .model import PointCapsuleAE

__all__ = [
    "CONV_ABLATION",
    "DYNAMIC_ROUTING",
    "FIXED_SEED",
    "GRID_MODES",
    "RESAMPLE_PER_FORWARD",
    "ROUTING_MODES",
    "BatchNorm",
    "CapsuleDecoder",
    "CapsuleEncoder",
    "ConvAblation",
    "DecoderConfig",
    "DynamicRouting",
    "EncoderConfig",
    "Linear",
    "PatchGrid",
    "PointCapsuleAE",
    "Reconstruction",
    "RoutingConfig",
    "RoutingState",
    "glorot_uniform",
    "sample_grid",
    "squash",
]
