from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import asdict, dataclass
from typing import Any, TYPE_CHECKING

import torch

from radt.exceptions import ConfigError, NonFiniteGradientError


__all__ = (
    "OptimConfig",
    "OptimState",
    "lr_at_step",
    "build_optimizer",
    "global_norm",
    "clip_global_norm",
    "adamw_step",
)

if TYPE_CHECKING:
    from torch import Tensor, nn

_LOGGER = logging.getLogger("radt.nncore.optim")


@dataclass(frozen=True)
class OptimConfig:
    """AdamW with linear warm-up and cosine decay to ``min_lr``.

    ``max_grad_norm=None`` disables clipping.
    """

    lr: float = 1e-4
    min_lr: float = 1e-6
    warmup_steps: int = 4000
    total_steps: int = 100_000
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = 0.25

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.min_lr < 0 or self.min_lr > self.lr:
            raise ConfigError(f"Need 0 <= min_lr <= lr and lr > 0, got lr={self.lr}, min_lr={self.min_lr}")
        if self.warmup_steps < 0 or self.total_steps < 1:
            raise ConfigError("warmup_steps must be >= 0 and total_steps >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"Betas must be in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ConfigError(f"max_grad_norm must be positive, got {self.max_grad_norm}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def lr_at_step(step: int, peak: float, warmup: int, total: int, floor: float) -> float:
    """Learning rate at ``step``: 0 at step 0, ``peak`` at the end of warm-up,
    then a cosine decay that reaches ``floor`` at ``total`` and stays there.
    """
    if warmup > 0 and step < warmup:
        return peak * step / warmup
    if step >= total:
        return floor
    span = max(total - warmup, 1)
    ratio = (step - warmup) / span
    coeff = 0.5 * (1.0 + math.cos(math.pi * ratio))
    return floor + coeff * (peak - floor)


def build_optimizer(model: nn.Module, config: OptimConfig) -> torch.optim.AdamW:
    """AdamW over the trainable parameters of ``model``.

    Matrices and embedding tables are weight decayed; biases and LayerNorm
    gains are not.
    """
    params = {n: p for n, p in model.named_parameters() if p.requires_grad}
    decay = [p for p in params.values() if p.dim() >= 2]
    no_decay = [p for p in params.values() if p.dim() < 2]
    _LOGGER.debug(
        "Optimizer groups: %d decayed tensor(s) (%d values), %d not decayed (%d values)",
        len(decay),
        sum(p.numel() for p in decay),
        len(no_decay),
        sum(p.numel() for p in no_decay),
    )
    groups = [
        {"params": decay, "weight_decay": config.weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]
    return torch.optim.AdamW(
        groups, lr=config.lr, betas=(config.beta1, config.beta2), eps=config.eps
    )


@dataclass
class OptimState:
    """Everything an update needs besides the parameters and their gradients."""

    optimizer: torch.optim.AdamW
    config: OptimConfig
    step: int = 0

    @classmethod
    def create(cls, model: nn.Module, config: OptimConfig) -> OptimState:
        return cls(build_optimizer(model, config), config)

    @property
    def lr(self) -> float:
        c = self.config
        return lr_at_step(self.step + 1, c.lr, c.warmup_steps, c.total_steps, c.min_lr)


def global_norm(grads: Iterable[Tensor]) -> float:
    total = 0.0
    for g in grads:
        total += float(g.detach().double().pow(2).sum())
    return math.sqrt(total)


def clip_global_norm(grads: Iterable[Tensor], max_norm: float = 0.25) -> list[Tensor]:
    """Scale ``grads`` in place by ``max_norm / norm`` when their joint L2 norm
    exceeds ``max_norm``; otherwise leave them untouched.
    """
    grads = list(grads)
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g.mul_(scale)
    return grads


def adamw_step(model: nn.Module, state: OptimState) -> float:
    """Clip, then apply one AdamW update at the scheduled learning rate.

    Returns:
        The global gradient norm before clipping

    Raises:
        NonFiniteGradientError: If any gradient holds NaN or infinity; no
            parameter is touched in that case
    """
    grads = []
    for name, p in model.named_parameters():
        if p.grad is None:
            continue
        if not torch.isfinite(p.grad).all():
            raise NonFiniteGradientError(name)
        grads.append(p.grad)

    norm = global_norm(grads)
    if state.config.max_grad_norm is not None:
        clip_global_norm(grads, state.config.max_grad_norm)

    lr = state.lr
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.step()
    state.step += 1
    return norm
