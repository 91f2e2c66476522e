"""Token layout of the sequence policies.

Every environment step becomes the tokens ``(R, s, a, r)`` in that order
(``(s, a, r)`` without returns-to-go), so a batch of ``T`` steps is a sequence
of ``4 * T`` tokens. The action is predicted from the state token. Sequences
are right-padded; padded steps are masked out of attention and the loss.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
import torch

from radt.datagen.records import Segment
from radt.exceptions import ShapeMismatchError


__all__ = ("TOKEN_KINDS", "TokenizedBatch", "tokenize", "detokenize")

TOKEN_KINDS = ("rtg", "state", "action", "reward")


@dataclass(frozen=True)
class TokenizedBatch:
    states: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    rtg: torch.Tensor
    mask: torch.Tensor
    loss_mask: torch.Tensor
    use_rtg: bool = True

    @property
    def batch_size(self) -> int:
        return int(self.states.shape[0])

    @property
    def steps(self) -> int:
        return int(self.states.shape[1])

    @property
    def kinds(self) -> tuple[str, ...]:
        return TOKEN_KINDS if self.use_rtg else TOKEN_KINDS[1:]

    @property
    def tokens_per_step(self) -> int:
        return len(self.kinds)

    @property
    def state_offset(self) -> int:
        return self.kinds.index("state")

    @property
    def token_mask(self) -> torch.Tensor:
        """Validity of every token, ``(B, tokens_per_step * T)``."""
        return self.mask.repeat_interleave(self.tokens_per_step, dim=1)

    def layout(self) -> list[tuple[str, int]]:
        """``(kind, step)`` of every token position in sequence order."""
        return [(kind, t) for t in range(self.steps) for kind in self.kinds]

    def with_rtg_dtype(self, dtype: torch.dtype) -> TokenizedBatch:
        return replace(self, rtg=self.rtg.to(dtype))


def tokenize(
    segments: Sequence[Segment],
    context: int,
    width: int,
    use_rtg: bool = True,
    loss_from: Sequence[int] | None = None,
) -> TokenizedBatch:
    """Pad ``segments`` to ``context`` steps and convert them to index tensors.

    Empty segments are allowed and produce fully masked rows.

    Args:
        segments: Sub-trajectories, at most ``context`` steps each
        context: Padded length in steps
        width: Grid width, used to turn ``(x, y)`` into a cell index
        use_rtg: Emit return-to-go tokens
        loss_from: Per segment, the first step that contributes to the loss
            (default 0)

    Raises:
        ShapeMismatchError: If a segment is longer than ``context``
    """
    B = len(segments)
    states = np.zeros((B, context), dtype=np.int64)
    actions = np.zeros((B, context), dtype=np.int64)
    rewards = np.zeros((B, context), dtype=np.int64)
    rtg = np.zeros((B, context), dtype=np.float32)
    mask = np.zeros((B, context), dtype=bool)
    loss_mask = np.zeros((B, context), dtype=bool)
    for i, seg in enumerate(segments):
        n = len(seg)
        if n > context:
            raise ShapeMismatchError("segment length", f"<= {context} steps", n)
        states[i, :n] = seg.states[:, 1] * width + seg.states[:, 0]
        actions[i, :n] = seg.actions
        rewards[i, :n] = seg.rewards
        rtg[i, :n] = seg.rtg
        mask[i, :n] = True
        start = 0 if loss_from is None else loss_from[i]
        loss_mask[i, start:n] = True
    return TokenizedBatch(
        states=torch.from_numpy(states),
        actions=torch.from_numpy(actions),
        rewards=torch.from_numpy(rewards),
        rtg=torch.from_numpy(rtg),
        mask=torch.from_numpy(mask),
        loss_mask=torch.from_numpy(loss_mask),
        use_rtg=use_rtg,
    )


def detokenize(batch: TokenizedBatch, width: int) -> list[Segment]:
    """Recover the unpadded segments of a batch."""
    out = []
    for i in range(batch.batch_size):
        n = int(batch.mask[i].sum())
        cells = batch.states[i, :n].numpy()
        out.append(
            Segment(
                states=np.stack([cells % width, cells // width], axis=1),
                actions=batch.actions[i, :n].numpy(),
                rewards=batch.rewards[i, :n].numpy(),
                rtg=batch.rtg[i, :n].numpy().astype(np.float64),
            )
        )
    return out
