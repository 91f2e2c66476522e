from __future__ import annotations

from typing import TYPE_CHECKING

import torch
from torch import nn

from radt.exceptions import ShapeMismatchError
from radt.nncore import softmax


__all__ = ("FrozenHopfield", "fh_project")

if TYPE_CHECKING:
    from torch import Tensor


def fh_project(x: Tensor, E: Tensor, P: Tensor, beta: float = 10.0) -> Tensor:
    """``E^T softmax(beta * E P x)`` for every row ``x`` of ``x``.

    Args:
        x: Raw token vectors ``(..., d_in)``
        E: Embedding matrix ``(v, d_lm)``
        P: Projection ``(d_lm, d_in)``
        beta: Inverse temperature

    Raises:
        ShapeMismatchError: If the dimensions do not line up
    """
    if P.shape[0] != E.shape[1]:
        raise ShapeMismatchError("projection rows", E.shape[1], P.shape[0])
    if x.shape[-1] != P.shape[1]:
        raise ShapeMismatchError("token dimension", P.shape[1], x.shape[-1])
    weights = softmax(beta * (x @ P.T) @ E.T, dim=-1)
    return weights @ E


class FrozenHopfield(nn.Module):
    """Maps one-hot tokens into the embedding space of a frozen encoder.

    ``P`` has entries drawn from ``N(0, d_in / d_lm)`` with a generator seeded
    by ``seed``; it is regenerated from the seed and never stored or trained.
    ``E`` is the token embedding matrix of the frozen encoder.
    """

    def __init__(self, E: Tensor, d_in: int, beta: float = 10.0, seed: int = 0) -> None:
        super().__init__()
        d_lm = E.shape[1]
        gen = torch.Generator().manual_seed(seed)
        std = (d_in / d_lm) ** 0.5
        P = torch.randn(d_lm, d_in, generator=gen, dtype=torch.float64) * std
        self.register_buffer("E", E.detach().to(torch.float64).clone(), persistent=False)
        self.register_buffer("P", P, persistent=False)
        self.beta = beta
        self.seed = seed
        self.d_in = d_in

    @property
    def d_lm(self) -> int:
        return int(self.E.shape[1])

    def weights(self, x: Tensor) -> Tensor:
        """Barycentric weights over the rows of ``E`` ``(..., v)``."""
        if x.shape[-1] != self.d_in:
            raise ShapeMismatchError("token dimension", self.d_in, x.shape[-1])
        return softmax(self.beta * (x.to(self.P.dtype) @ self.P.T) @ self.E.T, dim=-1)

    def forward(self, x: Tensor) -> Tensor:
        return fh_project(x.to(self.P.dtype), self.E, self.P, self.beta)

    def table(self) -> Tensor:
        """Projection of every one-hot token, ``(d_in, d_lm)``."""
        return self(torch.eye(self.d_in, dtype=self.P.dtype))
