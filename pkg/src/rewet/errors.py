"""Exception hierarchy shared by the simulator modules."""


class RewetError(Exception):
    """Base class for all simulator errors."""


class InvalidParameterError(RewetError, ValueError):
    pass


class DegeneratePorosityError(InvalidParameterError):
    pass


class UnknownPresetError(RewetError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown preset"


class ConfigError(RewetError):
    """Malformed config or campaign file. Carries the offending key and line."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NumericalFailure(RewetError, ArithmeticError):
    """Non-finite value produced during RHS assembly."""

    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message if cell is None else f"{message} at cell {cell}")


class SolverError(RewetError):
    """Base for time-integration failures."""

    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message if t is None else f"{message} (t={t:.6g} days)")


class StiffFailure(SolverError):
    pass


class NonlinearFailure(SolverError):
    pass


class InsufficientDataError(RewetError, ValueError):
    pass


class InvalidGridError(RewetError, ValueError):
    pass
