from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial
from typing import TYPE_CHECKING

import torch
import torch.nn.functional as F
from torch import nn

from radt.envs import N_ACTIONS
from radt.nncore import Block, init_weights
from radt.policy.config import PolicyConfig


__all__ = ("ModalityEmbedding", "PolicyModel", "AttentionMaps", "dt_forward_loss", "radt_forward_loss")

if TYPE_CHECKING:
    from radt.policy.tokenize import TokenizedBatch

_LOGGER = logging.getLogger("radt.policy")


class ModalityEmbedding(nn.Module):
    """Separate embedding per token type plus a learned absolute position
    table; interleaves the per-step tokens into one sequence.
    """

    def __init__(self, config: PolicyConfig, steps: int) -> None:
        super().__init__()
        H = config.hidden
        self.episode_len = config.episode_len
        self.state = nn.Embedding(config.n_cells, H)
        self.action = nn.Embedding(N_ACTIONS, H)
        self.reward = nn.Embedding(2, H)
        self.rtg = nn.Linear(1, H) if config.use_rtg else None
        self.pos = nn.Embedding(steps * config.tokens_per_step, H)

    def forward(self, batch: TokenizedBatch) -> torch.Tensor:
        parts = []
        if self.rtg is not None:
            scaled = (batch.rtg / self.episode_len).unsqueeze(-1).to(self.rtg.weight.dtype)
            parts.append(self.rtg(scaled))
        parts += [self.state(batch.states), self.action(batch.actions), self.reward(batch.rewards)]
        x = torch.stack(parts, dim=2)  # (B, T, tokens, H)
        B, T, K, H = x.shape
        x = x.reshape(B, T * K, H)
        if T * K > self.pos.num_embeddings:
            raise ValueError(f"Sequence of {T * K} tokens exceeds the position table")
        positions = torch.arange(T * K, device=x.device)
        return x + self.pos(positions)


@dataclass
class AttentionMaps:
    """Head-averaged attention weights of one forward pass, per layer."""

    self_weights: list[torch.Tensor]
    cross_weights: list[torch.Tensor | None]


class PolicyModel(nn.Module):
    """Decision Transformer, optionally with a cross-attention layer after every
    self-attention layer over a retrieved context (RA-DT).

    With ``cross_attention=False`` the module holds exactly the Decision
    Transformer parameters, and an RA-DT called without context computes the
    same function as the Decision Transformer that shares its weights.
    """

    def __init__(self, config: PolicyConfig, generator: torch.Generator | None = None) -> None:
        super().__init__()
        self.config = config
        self.embed = ModalityEmbedding(config, config.context)
        if config.cross_attention:
            self.embed_context: ModalityEmbedding | None = ModalityEmbedding(config, 2 * config.context)
        else:
            self.embed_context = None
        self.drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            Block(
                config.hidden,
                config.n_heads,
                config.dropout,
                cross_attention=config.cross_attention,
                mlp_ratio=config.mlp_ratio,
            )
            for _ in range(config.n_layers)
        )
        self.ln_f = nn.LayerNorm(config.hidden)
        self.head = nn.Linear(config.hidden, N_ACTIONS)
        self.apply(partial(init_weights, generator=generator))
        _LOGGER.debug(
            "PolicyModel with %d parameters (cross_attention=%s)",
            sum(p.numel() for p in self.parameters()),
            config.cross_attention,
        )

    def encode_context(
        self, context: TokenizedBatch | None
    ) -> tuple[torch.Tensor | None, torch.Tensor | None]:
        if context is None or self.embed_context is None or not bool(context.mask.any()):
            return None, None
        return self.embed_context(context), context.token_mask

    def trunk(
        self,
        x: torch.Tensor,
        token_mask: torch.Tensor,
        context: TokenizedBatch | None = None,
    ) -> torch.Tensor:
        """Run the blocks over already embedded inputs and apply the final norm."""
        ctx, ctx_mask = self.encode_context(context)
        x = self.drop(x)
        for block in self.blocks:
            x = block(x, token_mask, ctx, ctx_mask)
        return self.ln_f(x)

    def hidden_states(
        self,
        batch: TokenizedBatch,
        context: TokenizedBatch | None = None,
        token_dropout: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Final hidden states ``(B, tokens, hidden)``.

        ``token_dropout`` is an optional ``(B, tokens)`` boolean mask of input
        embeddings to zero before the first block.
        """
        x = self.embed(batch)
        if token_dropout is not None:
            x = x.masked_fill(token_dropout.unsqueeze(-1), 0.0)
        return self.trunk(x, batch.token_mask, context)

    def state_hidden(self, hidden: torch.Tensor, batch: TokenizedBatch) -> torch.Tensor:
        """Select the hidden states at state-token positions ``(B, T, hidden)``."""
        return hidden[:, batch.state_offset :: batch.tokens_per_step, :]

    def forward(
        self, batch: TokenizedBatch, context: TokenizedBatch | None = None
    ) -> torch.Tensor:
        """Action logits at every step ``(B, T, N_ACTIONS)``."""
        hidden = self.hidden_states(batch, context)
        return self.head(self.state_hidden(hidden, batch))

    def capture_attention(self, enabled: bool = True) -> None:
        for block in self.blocks:
            block.capture = enabled

    def attention_maps(self) -> AttentionMaps:
        """Weights recorded by the last forward pass after :meth:`capture_attention`."""
        self_w = []
        cross_w: list[torch.Tensor | None] = []
        for block in self.blocks:
            if block.last_self_weights is None:
                raise RuntimeError("No attention captured, call 'capture_attention' first")
            self_w.append(block.last_self_weights.mean(dim=1))
            cw = block.last_cross_weights
            cross_w.append(None if cw is None else cw.mean(dim=1))
        return AttentionMaps(self_w, cross_w)


def _masked_cross_entropy(logits: torch.Tensor, batch: TokenizedBatch) -> torch.Tensor:
    valid = batch.loss_mask & batch.mask
    if not bool(valid.any()):
        return logits.sum() * 0.0
    return F.cross_entropy(logits[valid], batch.actions[valid])


def dt_forward_loss(
    model: PolicyModel, batch: TokenizedBatch
) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean cross-entropy of the actions predicted at every valid state token."""
    logits = model(batch)
    return _masked_cross_entropy(logits, batch), logits


def radt_forward_loss(
    model: PolicyModel, batch: TokenizedBatch, retrieved: TokenizedBatch | None
) -> tuple[torch.Tensor, torch.Tensor]:
    """Like :func:`dt_forward_loss` with cross-attention over ``retrieved``.

    Rows of ``retrieved`` without any valid step (nothing retrieved) leave the
    cross-attention residual untouched.
    """
    logits = model(batch, retrieved)
    return _masked_cross_entropy(logits, batch), logits
