from .attention import CrossAttention, SelfAttention
from .blocks import MLP, Block
from .checkpoint import (
    CHECKPOINT_MAGIC,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from .functional import grad_check, init_weights, masked_softmax, softmax
from .optim import (
    OptimConfig,
    OptimState,
    adamw_step,
    build_optimizer,
    clip_global_norm,
    global_norm,
    lr_at_step,
)


__all__ = (
    "CHECKPOINT_MAGIC",
    "MLP",
    "Block",
    "Checkpoint",
    "CrossAttention",
    "OptimConfig",
    "OptimState",
    "SelfAttention",
    "adamw_step",
    "build_optimizer",
    "clip_global_norm",
    "decode_checkpoint",
    "encode_checkpoint",
    "global_norm",
    "grad_check",
    "init_weights",
    "load_checkpoint",
    "lr_at_step",
    "masked_softmax",
    "save_checkpoint",
    "softmax",
)
