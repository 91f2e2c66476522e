from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from functools import partial
from pathlib import Path
from typing import Any, TYPE_CHECKING

import torch
from torch import nn

from radt._hashing import digest
from radt.exceptions import CheckpointFormatError, ConfigError, FrozenModelError
from radt.nncore import Block, init_weights, load_checkpoint, save_checkpoint
from radt.policy import PolicyConfig, PolicyModel
from radt.ref import cache_reference


__all__ = (
    "EncoderConfig",
    "FrozenModule",
    "FrozenEncoder",
    "FrozenPolicyEncoder",
    "build_random_encoder",
    "load_frozen_encoder",
)

if TYPE_CHECKING:
    from torch import Tensor

    from radt._util import PathLikeStr
    from radt.policy import TokenizedBatch

_LOGGER = logging.getLogger("radt.embed")

ENCODER_KIND = "frozen_encoder"
POLICY_KIND = "policy"


class FrozenModule(nn.Module):
    """A module that is permanently in inference mode.

    After :meth:`freeze` its parameters do not require gradients and any
    attempt to switch training back on raises :class:`FrozenModelError`.
    """

    def freeze(self) -> FrozenModule:
        for p in self.parameters():
            p.requires_grad_(False)
        super().train(False)
        return self

    def train(self, mode: bool = True) -> FrozenModule:
        if mode:
            raise FrozenModelError(self)
        return super().train(False)

    def requires_grad_(self, requires_grad: bool = True) -> FrozenModule:
        if requires_grad:
            raise FrozenModelError(self)
        return super().requires_grad_(False)

    def parameter_digest(self) -> str:
        return digest(sorted(self.state_dict().items()))


@dataclass(frozen=True)
class EncoderConfig:
    vocab: int = 512
    hidden: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_positions: int = 1024
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden % self.n_heads != 0:
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by n_heads ({self.n_heads})")
        if self.vocab < 1 or self.max_positions < 1:
            raise ConfigError("vocab and max_positions must be positive")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class FrozenEncoder(FrozenModule):
    """Bidirectional transformer encoder standing in for a pre-trained language
    model. ``tok_emb.weight`` is the embedding matrix the FrozenHopfield
    projection reads out from.
    """

    def __init__(self, config: EncoderConfig) -> None:
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab, config.hidden)
        self.pos_emb = nn.Embedding(config.max_positions, config.hidden)
        self.blocks = nn.ModuleList(
            Block(config.hidden, config.n_heads, 0.0, causal=False)
            for _ in range(config.n_layers)
        )
        self.ln_f = nn.LayerNorm(config.hidden)

    @property
    def dim(self) -> int:
        return self.config.hidden

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        """Encode input embeddings ``(B, N, hidden)`` with validity ``(B, N)``."""
        N = x.shape[1]
        if N > self.config.max_positions:
            raise ValueError(f"{N} tokens exceed max_positions={self.config.max_positions}")
        x = x + self.pos_emb(torch.arange(N, device=x.device))
        for block in self.blocks:
            x = block(x, mask)
        return self.ln_f(x)

    def output_digest(self, n_tokens: int = 16) -> str:
        """Digest of the encoding of token ids ``0..n_tokens - 1``, all valid.

        Pins a build of the encoder: the same seed gives the same digest in
        every process.
        """
        ids = torch.arange(min(n_tokens, self.config.vocab))
        mask = torch.ones(1, ids.numel(), dtype=torch.bool)
        with torch.no_grad():
            out = self(self.tok_emb(ids).unsqueeze(0), mask)
        return digest(out)

    def save(self, path: PathLikeStr) -> None:
        save_checkpoint(
            path,
            self.state_dict(),
            {"kind": ENCODER_KIND, "encoder": self.config.to_dict()},
        )


class FrozenPolicyEncoder(FrozenModule):
    """A trained Decision Transformer used as a domain-specific embedding
    model: the final hidden states before the action head.
    """

    def __init__(self, policy: PolicyModel) -> None:
        super().__init__()
        if policy.config.cross_attention:
            raise ConfigError("A domain-specific encoder must be a plain Decision Transformer")
        self.policy = policy

    @property
    def dim(self) -> int:
        return self.policy.config.hidden

    def forward(self, batch: TokenizedBatch, token_dropout: Tensor | None = None) -> Tensor:
        return self.policy.hidden_states(batch, None, token_dropout)


def build_random_encoder(config: EncoderConfig | None = None) -> FrozenEncoder:
    """Build the seed-pinned random encoder and freeze it.

    The module is laid out on the meta device and its weights are drawn from a
    generator local to the call: concurrent builds with the same seed agree
    and the global RNG is never read.
    """
    config = config or EncoderConfig()
    gen = torch.Generator().manual_seed(config.seed)
    with torch.device("meta"):
        encoder = FrozenEncoder(config)
    encoder.to_empty(device="cpu")
    encoder.apply(partial(init_weights, generator=gen))
    return encoder.freeze()


def _load_encoder(path: Path) -> FrozenModule:
    ckpt = load_checkpoint(path)
    kind = ckpt.config.get("kind")
    try:
        if kind == ENCODER_KIND:
            with torch.device("meta"):
                module: FrozenModule = FrozenEncoder(EncoderConfig(**ckpt.config["encoder"]))
            module.load_state_dict(ckpt.tensors, assign=True)
        elif kind == POLICY_KIND:
            with torch.device("meta"):
                policy = PolicyModel(PolicyConfig.from_dict(ckpt.config["policy"]))
            policy.load_state_dict(ckpt.tensors, assign=True)
            module = FrozenPolicyEncoder(policy)
        else:
            raise CheckpointFormatError(f"'{path}' holds neither an encoder nor a policy (kind={kind!r})")
    except (KeyError, TypeError, RuntimeError) as e:
        raise CheckpointFormatError(f"'{path}' does not match its recorded architecture") from e
    _LOGGER.info("Loaded frozen %s from %s", kind, path)
    return module.freeze()


@cache_reference()
def _load_encoder_cached(path: Path) -> FrozenModule:
    return _load_encoder(path)


def load_frozen_encoder(path: PathLikeStr) -> FrozenModule:
    """Load a frozen encoder or a trained policy checkpoint as an encoder.

    Loaded encoders are shared per file and modification time, which is
    safe because frozen modules never change.

    Raises:
        ArtifactError: If the file does not exist
        CheckpointFormatError: If the file is not a compatible checkpoint
    """
    return _load_encoder_cached(Path(path).resolve())
