"""Errors and warning categories used across the package."""


class ManifestError(ValueError):
    """Raised when a dataset manifest is missing, empty, or malformed."""


class FormatError(ValueError):
    """Raised when a binary artifact has a bad magic, version, or layout."""


class NotFittedError(ValueError):
    """Raised when transform/predict is called before fit."""


class DegenerateInputWarning(UserWarning):
    """Emitted when a degenerate input (zero vector, constant patch,
    empty cluster) is handled by a documented fallback instead of an error."""


class ClampedEigenvalueWarning(UserWarning):
    """Emitted when near-zero eigenvalues are clamped during whitening."""


class ConvergenceWarning(UserWarning):
    """Emitted when an iterative solver stops at its iteration cap."""


class TruncatedListWarning(UserWarning):
    """Emitted when a ranked list is shorter than the requested cutoff N."""


class ConfigMismatchWarning(UserWarning):
    """Emitted when composed artifacts carry different config hashes."""
