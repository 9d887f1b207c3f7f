"""Exception hierarchy shared by all provmatch modules."""


class ProvMatchError(Exception):
    """Base class for every error raised by this package."""


# --- event parsing / ingestion ---

class MalformedRecord(ProvMatchError):
    """Input line could not be decoded in the declared wire format."""


class MissingField(ProvMatchError):
    """A required record field is absent or empty."""


class SchemaViolation(ProvMatchError):
    """Record decoded but violates the entity/relation typing rules."""


class NotAProcess(ProvMatchError):
    """Operation requires a process entity/node."""


class IoFailure(ProvMatchError):
    """Underlying file or stream could not be read/written."""


# --- graph construction ---

class InvalidWindow(ProvMatchError):
    """Time window bounds are inconsistent (start >= end)."""


# --- tensor math / training ---

class ShapeMismatch(ProvMatchError):
    """Operand shapes are incompatible."""


class GradMissing(ProvMatchError):
    """Optimizer step requested before gradients were populated."""


class InsufficientData(ProvMatchError):
    """Not enough snapshots/programs to satisfy a sampling request."""


# --- detection ---

class ModelMismatch(ProvMatchError):
    """Embedding width or model version disagrees with the database header."""


class EmptyDatabase(ProvMatchError):
    """Scoring requested against a database with no records."""


class InsufficientValidation(ProvMatchError):
    """Too few validation scores to calibrate a threshold."""


# --- benchmark ---

class InsufficientPrograms(ProvMatchError):
    """Experiment needs more distinct programs than the corpus provides."""


class SingleClass(ProvMatchError):
    """Metric needs both positive and negative labels."""


# --- cli ---

class ConfigError(ProvMatchError):
    """Invalid or inconsistent run configuration."""
