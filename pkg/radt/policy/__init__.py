from .ad import MAX_AD_EPISODES, ad_build_pair, ad_eval_context, ad_sequence
from .config import PolicyConfig
from .decode import (
    TARGET_RETURNS,
    DecodeMode,
    check_rtg_stream,
    decrement_rtg,
    sample_target_return,
    select_action,
    target_return_distribution,
)
from .model import AttentionMaps, ModalityEmbedding, PolicyModel, dt_forward_loss, radt_forward_loss
from .tokenize import TOKEN_KINDS, TokenizedBatch, detokenize, tokenize


__all__ = (
    "MAX_AD_EPISODES",
    "TARGET_RETURNS",
    "TOKEN_KINDS",
    "AttentionMaps",
    "DecodeMode",
    "ModalityEmbedding",
    "PolicyConfig",
    "PolicyModel",
    "TokenizedBatch",
    "ad_build_pair",
    "ad_eval_context",
    "ad_sequence",
    "check_rtg_stream",
    "decrement_rtg",
    "detokenize",
    "dt_forward_loss",
    "radt_forward_loss",
    "sample_target_return",
    "select_action",
    "target_return_distribution",
    "tokenize",
)
