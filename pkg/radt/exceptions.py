from __future__ import annotations

from typing import Any

from radt._util import get_fqn_type


class RadtException(Exception):
    """Base exception that all exceptions derive from."""


class ConfigError(RadtException):
    """Raised when a configuration object violates one of its invariants."""


class InvalidTaskError(ConfigError):
    """Raised when a grid task is malformed (goal or key outside the grid,
    key on the goal cell, non-positive episode length).
    """


class InsufficientTasksError(RadtException):
    """Raised when a task split asks for more distinct tasks than exist."""

    def __init__(self, kind: str, available: int, requested: int) -> None:
        super().__init__(self._create_message(kind, available, requested))
        self.available = available
        self.requested = requested

    @staticmethod
    def _create_message(kind: str, available: int, requested: int) -> str:
        return (
            "Cannot draw {} distinct '{}' tasks, only {} exist on this grid. "
            "Reduce 'n_train' + 'n_eval' or use a larger grid."
        ).format(requested, kind, available)


class EpisodeExhaustedError(RadtException):
    """Raised when stepping an environment whose episode is finished."""

    def __init__(self) -> None:
        super().__init__("episode exhausted, call 'reset' before stepping again")


class UnreachableGoalError(RadtException):
    """Raised when the optimal-return oracle cannot reach a target cell."""


class ArtifactError(RadtException):
    """Raised when an artifact cannot be read from or written to storage."""


class DatasetFormatError(ArtifactError):
    """Raised when a dataset on disk does not match the ``radt-ds-1`` contract."""

    def __init__(
        self, path: Any, reason: str, episode_id: int | None = None
    ) -> None:
        super().__init__(self._create_message(path, reason, episode_id))
        self.path = path
        self.episode_id = episode_id

    @staticmethod
    def _create_message(path: Any, reason: str, episode_id: int | None) -> str:
        where = f" (episode_id={episode_id})" if episode_id is not None else ""
        return f"Invalid dataset '{path}'{where}: {reason}"


class CheckpointFormatError(ArtifactError):
    """Raised when a checkpoint is not a valid ``radt-ckpt-1`` container."""


class IndexFormatError(ArtifactError):
    """Raised when an index snapshot is not a valid ``radt-idx-1`` directory."""


class ShapeMismatchError(RadtException):
    """Raised when tensors handed to a layer do not have compatible shapes."""

    def __init__(self, what: str, expected: Any, got: Any) -> None:
        super().__init__(f"Shape mismatch for {what}: expected {expected}, got {got}")


class NonFiniteGradientError(RadtException):
    """Raised when a parameter gradient contains NaN or infinity before an
    optimizer step.
    """

    def __init__(self, param_name: str) -> None:
        super().__init__(
            f"Gradient of parameter '{param_name}' is not finite, refusing to step"
        )
        self.param_name = param_name


class GradCheckError(RadtException):
    """Raised when a finite-difference gradient check cannot be run on the
    given graph (dropout active, wrong precision).
    """


class FrozenModelError(RadtException):
    """Raised when a gradient update is requested on a frozen encoder."""

    def __init__(self, model: Any) -> None:
        super().__init__(
            "'{}' is frozen and refuses gradient updates".format(get_fqn_type(model))
        )


class StreamTooShortError(RadtException):
    """Raised when an episode stream cannot produce an episode pair ``K`` apart."""

    def __init__(self, n_episodes: int, k: int) -> None:
        super().__init__(
            f"Need at least {k + 1} episodes to build a pair {k} episodes apart, "
            f"got {n_episodes}"
        )


class TrainingDivergedError(RadtException):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, step: int, loss: float) -> None:
        super().__init__(f"Training loss is not finite at step {step} (loss={loss})")
        self.step = step


class InvariantViolation(RadtException):
    """Raised when a run breaks one of its runtime invariants (cross-task
    retrieval during evaluation, RTG bookkeeping, AD context length).
    """


class EmptyTrajectoryError(RadtException):
    """Raised when a sub-trajectory with no steps is handed to an embedding
    model or tokenizer.
    """
