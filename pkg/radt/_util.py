from __future__ import annotations

import os
from typing import Any, Union

import numpy as np

PathLikeStr = Union[str, "os.PathLike[str]"]

# Purpose codes mixed into derived seeds so that streams drawn for different
# jobs from the same (root, task, seed) never coincide.
SEED_PURPOSE_SPLIT = 0
SEED_PURPOSE_COLLECT = 1
SEED_PURPOSE_TRAIN = 2
SEED_PURPOSE_EVAL = 3
SEED_PURPOSE_BOOTSTRAP = 4
SEED_PURPOSE_ENCODER = 5


def get_fqn(the_type: type) -> str:
    """Get ``{module}.{type_name}`` for a given type."""
    return f"{the_type.__module__}.{the_type.__qualname__}"


def get_fqn_type(obj: Any) -> str:
    """Get ``{module}.{type_name}`` for a given object."""
    return get_fqn(type(obj))


def repr_(cls) -> str:
    """Represent a class as ``{classname}({args})``."""
    classname = cls.__class__.__name__
    args = ", ".join([f"{k}={repr(v)}" for (k, v) in cls.__dict__.items()])
    return f"{classname}({args})"


def derive_seed(root: int, *labels: int) -> int:
    """Derive an independent 63-bit seed from a root seed and integer labels.

    This is the split function behind every per-(task, seed) random stream.
    The labels are appended to the root as the entropy of a
    :class:`numpy.random.SeedSequence`, so ``derive_seed(7, 3, 1)`` only
    depends on those three numbers and never on the order in which workers
    happen to run.
    """
    entropy = [int(root)] + [int(label) for label in labels]
    if any(value < 0 for value in entropy):
        raise ValueError("Seeds and seed labels must be non-negative")
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def make_rng(root: int, *labels: int) -> np.random.Generator:
    """Return a numpy generator seeded with :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(root, *labels))
