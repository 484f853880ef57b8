"""Exception hierarchy shared by all modules."""


class FapdError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(FapdError):
    """Arguments violate a precondition (shape, range, finiteness)."""


class InsufficientSamplesError(InvalidInputError):
    """Fewer samples than an estimator requires."""


class ConvergenceError(FapdError):
    """An iterative solver exhausted its iteration budget."""


class PartitionError(FapdError):
    """Dirichlet partitioning could not produce non-empty clients."""


class NumericError(FapdError):
    """A non-finite value appeared where a finite one is required."""


class DegenerateSimilarityError(FapdError):
    """Cosine similarity requested against a zero-norm vector."""


class FormatError(FapdError):
    """A serialized artifact is malformed or inconsistent."""


class ConfigError(FapdError):
    """A run configuration is unknown, ill-typed, or out of range."""
