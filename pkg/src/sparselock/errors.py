"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Tensor extents do not match what an operation needs."""


class ConfigurationError(ValueError):
    """Invalid layer, codec or simulator configuration."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a formula."""


class ScheduleError(ValueError):
    """A tile schedule does not cover its tensor."""


class SizeError(ValueError):
    """Codec input has the wrong length or alignment."""


class CorruptBlockError(ValueError):
    """Compressed payload cannot be decoded."""


class PackingError(ValueError):
    """A tile cannot be placed into a bin."""


class TmtLookupError(KeyError):
    """Tile id has no Tile-map Table entry."""


class SimulationError(RuntimeError):
    """Trace generation failed (missing mapping, inconsistent inputs)."""


class EstimationFailure(RuntimeError):
    """An attack could not produce an estimate from the observations."""


class TraceTooShort(ValueError):
    """Trace is too short for the requested analysis."""


class UndefinedCorrelation(ValueError):
    """Correlation is undefined for constant input."""
