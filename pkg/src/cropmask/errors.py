"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: ConfigError -> 2, ConvergenceError -> 4,
everything else below CropmaskError -> 3 (data error).
"""


class CropmaskError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CropmaskError):
    """Invalid configuration value, enum, or parameter combination."""


class FormatError(CropmaskError):
    """File does not conform to an expected binary format."""


class TruncationError(FormatError):
    """Declared payload size disagrees with the bytes actually present."""


class SchemaError(CropmaskError):
    """Structurally valid input carrying values outside the declared schema."""


class GeometryError(CropmaskError):
    """Degenerate or out-of-domain geometry."""


class ConflictError(CropmaskError):
    """Two label polygons of different classes claim the same pixel."""


class InvariantError(CropmaskError):
    """An in-memory object violates its own declared invariants."""


class DomainError(CropmaskError):
    """Input values outside the domain an operation is defined over."""


class FoldError(CropmaskError):
    """A cross-validation fold ended up without any samples."""


class ConvergenceError(CropmaskError):
    """An iterative solver exhausted its iteration budget."""


class StaleInputError(CropmaskError):
    """A stage input no longer matches the digest recorded in the run manifest."""


class IoError(CropmaskError):
    """Underlying I/O failure while writing an artifact."""
