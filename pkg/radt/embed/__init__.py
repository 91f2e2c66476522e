from .encoder import (
    EncoderConfig,
    FrozenEncoder,
    FrozenModule,
    FrozenPolicyEncoder,
    build_random_encoder,
    load_frozen_encoder,
)
from .hopfield import FrozenHopfield, fh_project
from .model import Aggregation, EmbeddingModel, EmbeddingVariant, embed_subtrajectory, vocab_size


__all__ = (
    "Aggregation",
    "EmbeddingModel",
    "EmbeddingVariant",
    "EncoderConfig",
    "FrozenEncoder",
    "FrozenHopfield",
    "FrozenModule",
    "FrozenPolicyEncoder",
    "build_random_encoder",
    "embed_subtrajectory",
    "fh_project",
    "load_frozen_encoder",
    "vocab_size",
)
