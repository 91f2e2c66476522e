from __future__ import annotations

import math
from typing import TYPE_CHECKING

import torch
from torch import nn

from radt.exceptions import ShapeMismatchError
from radt.nncore.functional import masked_softmax


__all__ = ("SelfAttention", "CrossAttention")

if TYPE_CHECKING:
    from torch import Tensor


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    B, T, H = x.shape
    return x.view(B, T, n_heads, H // n_heads).transpose(1, 2)


def _merge_heads(x: Tensor) -> Tensor:
    B, nh, T, hs = x.shape
    return x.transpose(1, 2).contiguous().view(B, T, nh * hs)


def _check_hidden(hidden: int, n_heads: int) -> None:
    if hidden % n_heads != 0:
        raise ShapeMismatchError("hidden size", f"a multiple of {n_heads} heads", hidden)


class SelfAttention(nn.Module):
    """Multi-head self-attention with an optional causal mask.

    The forward pass returns the update for the residual stream together with
    the head-wise attention weights ``(B, heads, T, T)``.
    """

    def __init__(
        self, hidden: int, n_heads: int, dropout: float = 0.0, causal: bool = True
    ) -> None:
        super().__init__()
        _check_hidden(hidden, n_heads)
        self.hidden = hidden
        self.n_heads = n_heads
        self.causal = causal
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.proj = nn.Linear(hidden, hidden)
        self.attn_drop = nn.Dropout(dropout)
        self.resid_drop = nn.Dropout(dropout)

    def forward(self, x: Tensor, mask: Tensor | None = None) -> tuple[Tensor, Tensor]:
        """Attend over ``x``.

        Args:
            x: Input sequence ``(B, T, hidden)``
            mask: Optional key validity ``(B, T)``; invalid keys get weight 0
        """
        if x.dim() != 3 or x.shape[-1] != self.hidden:
            raise ShapeMismatchError("self-attention input", f"(B, T, {self.hidden})", tuple(x.shape))
        B, T, _ = x.shape
        q, k, v = self.qkv(x).split(self.hidden, dim=2)
        q, k, v = (_split_heads(t, self.n_heads) for t in (q, k, v))

        allowed = torch.ones(T, T, dtype=torch.bool, device=x.device)
        if self.causal:
            allowed = torch.tril(allowed)
        allowed = allowed.view(1, 1, T, T)
        if mask is not None:
            if mask.shape != (B, T):
                raise ShapeMismatchError("self-attention mask", (B, T), tuple(mask.shape))
            allowed = allowed & mask.view(B, 1, 1, T)

        att = (q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(k.size(-1)))
        weights = masked_softmax(att, allowed)
        y = self.attn_drop(weights) @ v
        return self.resid_drop(self.proj(_merge_heads(y))), weights


class CrossAttention(nn.Module):
    """Full (non-causal) attention from a query sequence over a context.

    The forward pass returns the update for the residual stream. Batch rows
    whose context is empty (no valid position) receive an update of exactly
    zero, which makes the surrounding residual connection an identity.
    """

    def __init__(self, hidden: int, n_heads: int, dropout: float = 0.0) -> None:
        super().__init__()
        _check_hidden(hidden, n_heads)
        self.hidden = hidden
        self.n_heads = n_heads
        self.q = nn.Linear(hidden, hidden)
        self.kv = nn.Linear(hidden, 2 * hidden)
        self.proj = nn.Linear(hidden, hidden)
        self.attn_drop = nn.Dropout(dropout)
        self.resid_drop = nn.Dropout(dropout)

    def forward(
        self, x: Tensor, context: Tensor, context_mask: Tensor | None = None
    ) -> tuple[Tensor, Tensor]:
        """Attend from ``x`` ``(B, T, hidden)`` over ``context`` ``(B, S, hidden)``.

        Returns:
            The residual update ``(B, T, hidden)`` and the weights
            ``(B, heads, T, S)``
        """
        if x.dim() != 3 or x.shape[-1] != self.hidden:
            raise ShapeMismatchError("cross-attention query", f"(B, T, {self.hidden})", tuple(x.shape))
        B, T, _ = x.shape
        if context.dim() != 3 or context.shape[0] != B or context.shape[-1] != self.hidden:
            raise ShapeMismatchError(
                "cross-attention context", f"({B}, S, {self.hidden})", tuple(context.shape)
            )
        S = context.shape[1]
        if context_mask is None:
            context_mask = torch.ones(B, S, dtype=torch.bool, device=x.device)
        elif context_mask.shape != (B, S):
            raise ShapeMismatchError("cross-attention mask", (B, S), tuple(context_mask.shape))

        q = _split_heads(self.q(x), self.n_heads)
        k, v = self.kv(context).split(self.hidden, dim=2)
        k, v = _split_heads(k, self.n_heads), _split_heads(v, self.n_heads)

        att = (q @ k.transpose(-2, -1)) * (1.0 / math.sqrt(k.size(-1)))
        weights = masked_softmax(att, context_mask.view(B, 1, 1, S))
        y = self.attn_drop(weights) @ v
        out = self.resid_drop(self.proj(_merge_heads(y)))
        has_context = context_mask.any(dim=1).to(out.dtype).view(B, 1, 1)
        return out * has_context, weights
