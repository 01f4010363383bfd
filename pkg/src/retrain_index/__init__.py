"""Retrainability index: wage and routine-task change across a program participation window."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConvergenceError,
    DegenerateError,
    IngestError,
    MissingArtifactError,
    RetrainIndexError,
    SeparationError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DegenerateError",
    "IngestError",
    "MissingArtifactError",
    "RetrainIndexError",
    "SeparationError",
]
