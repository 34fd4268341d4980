"""Exception types shared across the toolkit.

Every error carries a short machine-readable ``category`` string; the
command-line front end turns any raised toolkit error into a single
diagnostic line of the form ``error:<category>:<message>``.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""

    category = "internal"


class ParseError(ToolkitError):
    """Malformed text input (bad line, bad header, bad number)."""

    category = "parse"


class FormatError(ToolkitError):
    """Corrupt or unsupported binary payload (magic, version, truncation)."""

    category = "format"


class DimensionError(ToolkitError):
    """Point cloud with too few or ambiguous feature columns."""

    category = "dimension"


class SizeError(ToolkitError):
    """Point count does not meet a structural requirement (power of two)."""

    category = "size"


class ArgumentError(ToolkitError):
    """Argument outside its documented domain."""

    category = "argument"


class ShapeError(ToolkitError):
    """Tensor shapes do not conform for the requested operation."""

    category = "shape"


class DataError(ToolkitError):
    """Dataset content inconsistent with the model or task."""

    category = "data"


class DivergenceError(ToolkitError):
    """Training produced a non-finite loss."""

    category = "divergence"

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class CompatibilityError(ToolkitError):
    """Checkpoint and requested configuration disagree.

    ``field`` names the first differing configuration field.
    """

    category = "compat"

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UsageError(ToolkitError):
    """Bad command-line invocation (conflicting or missing flags)."""

    category = "usage"


class ConfigError(ToolkitError):
    """Bad configuration file (unknown key, unparseable value)."""

    category = "config"
