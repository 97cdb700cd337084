"""Exception types shared across the toolkit."""


class DicompError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpecError(DicompError, ValueError):
    """A network spec, schedule, or weight set violates its invariants."""


class ShapeError(DicompError, ValueError):
    """Tensor dimensions are incompatible with the requested operation."""


class RangeError(DicompError, ValueError):
    """Values fall outside the contract range of an operation."""


class DecodeError(DicompError, RuntimeError):
    """A bitstream is truncated, corrupt, or inconsistent with its header."""


class TrainingDivergedError(DicompError, RuntimeError):
    """Training produced a non-finite loss."""
