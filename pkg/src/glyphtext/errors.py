"""Exception types raised across the package.

Every contract violation maps to one of these so callers (and the CLI) can
report a stable error kind rather than a bare ValueError.
"""


class GlyphTextError(Exception):
    """Base class for all package errors."""


class ShapeError(GlyphTextError, ValueError):
    """Tensor dimensions violate an operation's contract."""


class ParameterError(GlyphTextError, ValueError):
    """A hyperparameter or configuration value is out of range."""


class LabelError(GlyphTextError, ValueError):
    """A class label is outside [0, num_classes)."""


class DivergenceError(GlyphTextError, RuntimeError):
    """Training produced a non-finite loss or gradient."""


class AtlasError(GlyphTextError, ValueError):
    """Atlas file or manifest violates the binary/text format."""


class DatasetError(GlyphTextError, ValueError):
    """Dataset file is malformed or empty."""


class StratificationError(GlyphTextError, ValueError):
    """A class has too few records to split."""


class EmptyDocumentError(GlyphTextError, ValueError):
    """Document text is empty after normalization."""


class CheckpointError(GlyphTextError, ValueError):
    """Checkpoint file is malformed or truncated."""


class CompatibilityError(GlyphTextError, ValueError):
    """Checkpoint and dataset disagree (e.g. label maps differ)."""


class TrainingLockError(GlyphTextError, RuntimeError):
    """Another live process owns the checkpoint directory."""
