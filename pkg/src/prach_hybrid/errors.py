"""Exception hierarchy shared by the library and the CLI."""


class PrachError(Exception):
    """Base class for all library errors."""


class ConfigError(PrachError, ValueError):
    """Invalid configuration value (bad root index, unknown channel, ...)."""


class DataError(PrachError):
    """Malformed or inconsistent data files."""


class ModelFormatError(DataError):
    """Model file cannot be parsed."""


class ModelVersionError(ModelFormatError):
    """Model file carries an unsupported format version."""


class TrainingError(PrachError):
    """Training could not proceed or diverged."""


class EstimationError(PrachError):
    """Timing advance could not be estimated from the given window."""


class LabelError(PrachError):
    """Ground-truth TA label falls outside the preamble window."""
