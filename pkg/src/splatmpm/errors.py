"""Exception hierarchy shared by every module."""


class SplatMPMError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateGradientError(SplatMPMError, ValueError):
    """Deformation gradient is singular or inverted (det F <= 0)."""

    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle


class PressureOverflowError(SplatMPMError, ArithmeticError):
    """The elastic volume ratio J_E(p) has a non-positive radicand."""

    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle


class OutOfDomainError(SplatMPMError, IndexError):
    """A particle left the interior margin of the background grid."""

    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle


class DegenerateCovarianceError(SplatMPMError, ValueError):
    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle


class CoincidentLightError(SplatMPMError, ValueError):
    pass


class InsufficientNeighborsError(SplatMPMError, ValueError):
    pass


class OracleInapplicableError(SplatMPMError):
    pass


class ParseError(SplatMPMError, ValueError):
    """Malformed particle file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SplatMPMError, ValueError):
    """Scene or fill configuration is invalid; ``pointer`` is a JSON pointer."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class FrameAbort(SplatMPMError):
    """A substep failed numerically; carries frame/substep/particle context."""

    def __init__(self, message, *, frame=None, substep=None, particle=None, cause=None):
        super().__init__(message)
        self.frame = frame
        self.substep = substep
        self.particle = particle
        self.cause = cause

    def record(self):
        return {
            "error": type(self.cause).__name__ if self.cause is not None else "FrameAbort",
            "message": str(self),
            "frame": self.frame,
            "substep": self.substep,
            "particle": self.particle,
        }
