"""Exception types shared across the pipeline."""


class RetrainIndexError(Exception):
    """Base class for package errors."""


class IngestError(RetrainIndexError):
    """Input file cannot be turned into participation records."""


class DegenerateError(RetrainIndexError, ValueError):
    """A statistic is undefined for the supplied data (constant input, empty group, ...)."""


class SeparationError(RetrainIndexError):
    """Logistic fit diverges because the classes are perfectly separated."""


class ConvergenceError(RetrainIndexError):
    """Iterative fit stopped at its iteration cap without meeting tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class MissingArtifactError(RetrainIndexError):
    """An upstream stage output needed by a CLI command does not exist."""

    def __init__(self, path):
        super().__init__(f"missing artifact: {path}")
        self.path = str(path)


class ConfigError(RetrainIndexError):
    """Run configuration failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
