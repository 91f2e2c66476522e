from __future__ import annotations

import logging
from collections.abc import Sequence
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
import torch

from radt.embed.encoder import FrozenEncoder, FrozenModule, FrozenPolicyEncoder
from radt.embed.hopfield import FrozenHopfield
from radt.envs import N_ACTIONS
from radt.exceptions import ConfigError, EmptyTrajectoryError
from radt.policy import TOKEN_KINDS, tokenize


__all__ = ("Aggregation", "EmbeddingVariant", "EmbeddingModel", "embed_subtrajectory", "vocab_size")

if TYPE_CHECKING:
    from radt.datagen.records import Segment
    from radt.policy import TokenizedBatch

_LOGGER = logging.getLogger("radt.embed")


class EmbeddingVariant(str, Enum):
    DOMAIN_SPECIFIC = "domain_specific"
    DOMAIN_AGNOSTIC = "domain_agnostic"


class Aggregation(str, Enum):
    """Token positions averaged into the sub-trajectory vector."""

    STATE = "state"
    ALL = "all"
    ACTION = "action"
    REWARD = "reward"
    RTG = "rtg"


class EmbeddingModel:
    """The trajectory embedding ``g``: sub-trajectory in, fixed vector out.

    Build it with :meth:`domain_agnostic` (one-hot tokens through a
    FrozenHopfield projection into a frozen encoder) or :meth:`domain_specific`
    (a frozen, trained Decision Transformer). Both are immutable and safe to
    share between threads.
    """

    __slots__ = ("variant", "encoder", "width", "height", "episode_len", "aggregation", "hopfield", "_fh_table")

    def __init__(
        self,
        variant: EmbeddingVariant | str,
        encoder: FrozenModule,
        width: int,
        height: int,
        episode_len: int,
        aggregation: Aggregation | str = Aggregation.STATE,
        hopfield: FrozenHopfield | None = None,
    ) -> None:
        self.variant = EmbeddingVariant(variant)
        self.encoder = encoder
        self.width = width
        self.height = height
        self.episode_len = episode_len
        self.aggregation = Aggregation(aggregation)
        self.hopfield = hopfield
        self._fh_table: torch.Tensor | None = None
        if self.variant is EmbeddingVariant.DOMAIN_AGNOSTIC:
            if hopfield is None or not isinstance(encoder, FrozenEncoder):
                raise ConfigError("The domain-agnostic variant needs a FrozenEncoder and a FrozenHopfield")
            self._fh_table = hopfield.table().to(encoder.tok_emb.weight.dtype)
        elif not isinstance(encoder, FrozenPolicyEncoder):
            raise ConfigError("The domain-specific variant needs a FrozenPolicyEncoder")

    def __repr__(self) -> str:
        return (
            f"EmbeddingModel(variant={self.variant.value}, dim={self.dim}, "
            f"aggregation={self.aggregation.value})"
        )

    @classmethod
    def domain_agnostic(
        cls,
        encoder: FrozenEncoder,
        width: int,
        height: int,
        episode_len: int,
        beta: float = 10.0,
        seed: int = 0,
        aggregation: Aggregation | str = Aggregation.STATE,
    ) -> EmbeddingModel:
        d_in = vocab_size(width, height, episode_len)
        hopfield = FrozenHopfield(encoder.tok_emb.weight, d_in, beta=beta, seed=seed)
        return cls(EmbeddingVariant.DOMAIN_AGNOSTIC, encoder, width, height, episode_len, aggregation, hopfield)

    @classmethod
    def domain_specific(
        cls, encoder: FrozenPolicyEncoder, aggregation: Aggregation | str = Aggregation.STATE
    ) -> EmbeddingModel:
        cfg = encoder.policy.config
        return cls(EmbeddingVariant.DOMAIN_SPECIFIC, encoder, cfg.width, cfg.height, cfg.episode_len, aggregation)

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def _token_ids(self, batch: TokenizedBatch) -> torch.Tensor:
        n_cells = self.width * self.height
        rtg = batch.rtg.round().clamp(0, self.episode_len).long()
        ids = torch.stack(
            [
                n_cells + N_ACTIONS + 2 + rtg,
                batch.states,
                n_cells + batch.actions,
                n_cells + N_ACTIONS + batch.rewards,
            ],
            dim=2,
        )
        B, T, K = ids.shape
        return ids.reshape(B, T * K)

    def _aggregate(self, hidden: torch.Tensor, batch: TokenizedBatch) -> torch.Tensor:
        token_mask = batch.token_mask
        if self.aggregation is not Aggregation.ALL:
            k = batch.kinds.index(self.aggregation.value)
            kind = torch.zeros_like(token_mask)
            kind[:, k :: batch.tokens_per_step] = True
            token_mask = token_mask & kind
        w = token_mask.to(hidden.dtype).unsqueeze(-1)
        return (hidden * w).sum(dim=1) / w.sum(dim=1).clamp(min=1.0)

    def embed_batch(
        self,
        segments: Sequence[Segment],
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Embed every segment, ``(len(segments), dim)`` float32.

        ``dropout`` zeroes that fraction of input token embeddings (query
        dropout); the draw comes from ``rng``.

        Raises:
            EmptyTrajectoryError: If a segment has no steps
        """
        if any(len(s) == 0 for s in segments):
            raise EmptyTrajectoryError("Cannot embed a sub-trajectory without steps")
        if not segments:
            return np.empty((0, self.dim), dtype=np.float32)
        steps = max(len(s) for s in segments)
        batch = tokenize(segments, steps, self.width, use_rtg=True)

        drop = None
        if dropout > 0:
            if rng is None:
                raise ValueError("Query dropout needs a random generator")
            shape = (batch.batch_size, steps * len(TOKEN_KINDS))
            drop = torch.from_numpy(rng.random(shape) < dropout)

        with torch.no_grad():
            if self.variant is EmbeddingVariant.DOMAIN_AGNOSTIC:
                x = self._fh_table[self._token_ids(batch)]
                if drop is not None:
                    x = x.masked_fill(drop.unsqueeze(-1), 0.0)
                hidden = self.encoder(x, batch.token_mask)
            else:
                hidden = self.encoder(batch, drop)
            out = self._aggregate(hidden, batch)
        return out.float().numpy()


def vocab_size(width: int, height: int, episode_len: int) -> int:
    """Size of the joint one-hot vocabulary: cells, actions, rewards and
    integer returns-to-go ``0..episode_len``.
    """
    return width * height + N_ACTIONS + 2 + episode_len + 1


def embed_subtrajectory(
    segment: Segment,
    model: EmbeddingModel,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Key or query vector of one sub-trajectory."""
    return model.embed_batch([segment], dropout, rng)[0]
