"""Exception hierarchy for the OAM detection toolkit."""


class OamError(Exception):
    """Base class for all toolkit errors."""


class DomainError(OamError, ValueError):
    """An argument lies outside the domain of an operation."""


class GeometryError(DomainError):
    """A link geometry violates its invariants."""


class ModeError(DomainError):
    """An OAM mode cannot be resolved by the transmit array."""


class DegenerateSampleError(OamError, ValueError):
    """A received sample has zero magnitude so its phase is undefined."""


class ZeroSpanError(OamError, ValueError):
    """A feature or label dimension is constant and cannot be normalized."""


class DimensionError(OamError, ValueError):
    """Feature dimension does not match the model."""


class DegenerateProblemError(OamError, ValueError):
    """A training problem has fewer than two classes."""


class TrainingError(OamError, RuntimeError):
    """Training could not proceed (e.g. a singular system beyond damping limits)."""


class ParseError(OamError, ValueError):
    """A data or config file is malformed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class StageError(OamError, RuntimeError):
    """Wraps a failure inside an experiment stage, tagging the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
