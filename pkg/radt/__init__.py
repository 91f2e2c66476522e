from .__version__ import __description__, __title__, __version__
from .exceptions import ConfigError, InvariantViolation, RadtException


__all__ = (
    "__description__",
    "__title__",
    "__version__",
    "ConfigError",
    "InvariantViolation",
    "RadtException",
)
