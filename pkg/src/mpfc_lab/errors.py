"""Shared exception types."""


class InvalidFieldError(ValueError):
    """A field contains non-finite samples."""


class ConfigurationError(ValueError):
    """A configuration value violates a precondition.

    The message always names the offending key (for run configs) or the
    offending Fourier mode (for solver symbol checks).
    """
