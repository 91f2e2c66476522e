from __future__ import annotations

from typing import TYPE_CHECKING

from torch import nn

from radt.nncore.attention import CrossAttention, SelfAttention


__all__ = ("MLP", "Block")

if TYPE_CHECKING:
    from torch import Tensor


class MLP(nn.Module):
    def __init__(self, hidden: int, dropout: float = 0.0, ratio: int = 4) -> None:
        super().__init__()
        self.fc = nn.Linear(hidden, ratio * hidden)
        self.act = nn.GELU(approximate="tanh")
        self.proj = nn.Linear(ratio * hidden, hidden)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop(self.proj(self.act(self.fc(x))))


class Block(nn.Module):
    """Pre-LayerNorm transformer block.

    With ``cross_attention`` a cross-attention layer follows the
    self-attention layer. When ``capture`` is set the latest attention
    weights are kept on ``last_self_weights`` and ``last_cross_weights``.
    """

    def __init__(
        self,
        hidden: int,
        n_heads: int,
        dropout: float = 0.0,
        cross_attention: bool = False,
        causal: bool = True,
        mlp_ratio: int = 4,
    ) -> None:
        super().__init__()
        self.ln_1 = nn.LayerNorm(hidden)
        self.attn = SelfAttention(hidden, n_heads, dropout, causal=causal)
        if cross_attention:
            self.ln_ca = nn.LayerNorm(hidden)
            self.cross_attn: CrossAttention | None = CrossAttention(hidden, n_heads, dropout)
        else:
            self.cross_attn = None
        self.ln_2 = nn.LayerNorm(hidden)
        self.mlp = MLP(hidden, dropout, mlp_ratio)
        self.capture = False
        self.last_self_weights: Tensor | None = None
        self.last_cross_weights: Tensor | None = None

    def forward(
        self,
        x: Tensor,
        mask: Tensor | None = None,
        context: Tensor | None = None,
        context_mask: Tensor | None = None,
    ) -> Tensor:
        update, weights = self.attn(self.ln_1(x), mask)
        x = x + update
        if self.capture:
            self.last_self_weights = weights.detach()
            self.last_cross_weights = None
        # No context means the cross-attention residual is the identity.
        if self.cross_attn is not None and context is not None and context.shape[1] > 0:
            update, weights = self.cross_attn(self.ln_ca(x), context, context_mask)
            x = x + update
            if self.capture:
                self.last_cross_weights = weights.detach()
        return x + self.mlp(self.ln_2(x))
