"""Exception hierarchy shared by every module.

``ValidationError`` subclasses map to CLI exit code 1, ``ArtifactError``
subclasses (and plain ``OSError``) to exit code 2.
"""


class ValidationError(ValueError):
    """Input that violates a documented invariant."""


class NormalizationError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class DegenerateError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class ConfigMismatch(ValidationError):
    pass


class InfeasibleObservation(ValidationError):
    pass


class UndefinedEstimate(ValidationError):
    """Raised when a batch holds no record for the queried state."""


class NonConvergence(RuntimeError):
    pass


class ArtifactError(OSError):
    pass


class MissingArtifact(ArtifactError):
    pass
