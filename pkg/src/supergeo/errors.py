"""Exception hierarchy shared by all modules."""


class SuperGeoError(Exception):
    """Base class for every error raised by this package."""


class GeneratorMismatchError(SuperGeoError, ValueError):
    """Two Grassmann numbers live in algebras with different generator counts."""


class NonInvertibleError(SuperGeoError, ZeroDivisionError):
    """Inverse requested of an element (or matrix) whose body is singular."""


class ParityError(SuperGeoError, ValueError):
    """A value or expression has the wrong parity for where it is used."""


class ParseError(SuperGeoError, ValueError):
    """Malformed expression, literal or model file."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class EvaluationError(SuperGeoError, ArithmeticError):
    """Numeric evaluation left the domain of a function (log, division)."""


class FlowDomainError(SuperGeoError, ArithmeticError):
    """Numeric integration left the flow domain (coefficient blow-up)."""

    def __init__(self, message, last_time):
        super().__init__(f"{message}; last valid time {last_time!r}")
        self.last_time = last_time


class TorsionError(SuperGeoError, ValueError):
    """A torsion-free connection was required but the given one has torsion."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class NotProjectiveError(SuperGeoError, ValueError):
    """A difference tensor is not of the projective (1-form) shape."""

    def __init__(self, residual):
        super().__init__(f"not projectively flat difference (residual {residual:.3e})")
        self.residual = residual
