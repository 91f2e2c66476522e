from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from typing import TYPE_CHECKING

import numpy as np
import torch
from torch import nn

from radt.exceptions import GradCheckError


__all__ = ("softmax", "masked_softmax", "init_weights", "grad_check")

if TYPE_CHECKING:
    from torch import Tensor

_LOGGER = logging.getLogger("radt.nncore")

INIT_STD = 0.02


def softmax(x: Tensor, dim: int = -1) -> Tensor:
    """Numerically stable softmax: the row maximum is subtracted before
    exponentiating, so logits such as ``[1000, 0]`` do not overflow.
    """
    shifted = x - x.amax(dim=dim, keepdim=True)
    exp = shifted.exp()
    return exp / exp.sum(dim=dim, keepdim=True)


def masked_softmax(scores: Tensor, allowed: Tensor, dim: int = -1) -> Tensor:
    """Softmax over the ``allowed`` entries of ``scores``.

    Disallowed entries get a weight of exactly zero. Rows without a single
    allowed entry come out as all zeros instead of NaN.
    """
    filled = scores.masked_fill(~allowed, torch.finfo(scores.dtype).min)
    return softmax(filled, dim=dim) * allowed.to(scores.dtype)


def init_weights(module: nn.Module, generator: torch.Generator | None = None) -> None:
    """GPT-style initialization, meant for ``model.apply(init_weights)``.

    Linear and embedding weights are drawn from a normal with standard
    deviation 0.02 truncated at two standard deviations; biases start at zero.
    A seeded ``generator``, bound with :func:`functools.partial`, makes the
    draws independent of the process-wide RNG.
    """
    if isinstance(module, (nn.Linear, nn.Embedding)):
        nn.init.trunc_normal_(
            module.weight, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD, generator=generator
        )
        if isinstance(module, nn.Linear) and module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def _has_active_dropout(module: nn.Module) -> bool:
    return any(
        isinstance(m, nn.Dropout) and m.p > 0 and m.training for m in module.modules()
    )


def grad_check(
    model_fn: Callable[[], Tensor],
    params: nn.Module | Mapping[str, Tensor],
    h: float = 1e-5,
    max_entries: int | None = 64,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Compare autograd gradients with central finite differences.

    ``model_fn`` recomputes a scalar loss from the current parameter values.
    For every parameter tensor up to ``max_entries`` entries are checked
    (all of them when ``None``); the relative error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``.

    Returns:
        The largest relative error over all checked entries

    Raises:
        GradCheckError: If a parameter is not double precision, dropout is
            active, or two evaluations of ``model_fn`` disagree
    """
    if isinstance(params, nn.Module):
        if _has_active_dropout(params):
            raise GradCheckError(
                "Dropout is active, the graph is not deterministic. Call 'eval()' "
                "or build the model with dropout 0."
            )
        named = dict(params.named_parameters())
    else:
        named = dict(params)

    for name, p in named.items():
        if p.dtype != torch.float64:
            raise GradCheckError(f"Parameter '{name}' is {p.dtype}, grad_check needs float64")

    tensors = list(named.values())
    loss = model_fn()
    if loss.numel() != 1:
        raise GradCheckError("model_fn must return a scalar")
    with torch.no_grad():
        again = model_fn()
    if not torch.equal(loss.detach(), again.detach()):
        raise GradCheckError("model_fn is not deterministic")

    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for (name, p), g in zip(named.items(), grads):
        analytic = torch.zeros_like(p) if g is None else g.detach()
        flat = p.data.view(-1)
        flat_grad = analytic.reshape(-1)
        n = flat.numel()
        if max_entries is None or n <= max_entries:
            picks = np.arange(n)
        else:
            picks = rng.choice(n, size=max_entries, replace=False)

        with torch.no_grad():
            for i in picks.tolist():
                orig = flat[i].item()
                flat[i] = orig + h
                f_plus = model_fn().item()
                flat[i] = orig - h
                f_minus = model_fn().item()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                a = flat_grad[i].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                if err > worst:
                    worst = err
                    _LOGGER.debug("grad_check %s[%d]: analytic=%g numeric=%g", name, i, a, numeric)
    return worst
