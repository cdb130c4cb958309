"""Exception hierarchy shared by all splitpro modules."""


class SplitProError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(SplitProError, ValueError):
    pass


class RangeOutOfBounds(SplitProError, IndexError):
    pass


class DepthOutOfRange(SplitProError, ValueError):
    pass


class NotObservable(SplitProError, ValueError):
    pass


class HorizonTooShort(SplitProError, ValueError):
    pass


class NotPersistentlyExciting(SplitProError, ValueError):
    """Data is not rich enough for its Hankel matrix to span the behavior."""


class InsufficientData(NotPersistentlyExciting):
    """Too few Hankel columns for the rank condition to be satisfiable."""


class InfeasiblePrefix(SplitProError, ValueError):
    """The initial trajectory is not a valid trajectory of the system."""


class LayoutMismatch(SplitProError, ValueError):
    pass


class NotPositiveDefinite(SplitProError, ValueError):
    pass


class StepSizeTooLarge(SplitProError, ValueError):
    pass


class IteratesNotRecorded(SplitProError, RuntimeError):
    pass


class SingularKKT(SplitProError, ArithmeticError):
    pass


class Infeasible(SplitProError, ValueError):
    pass


class SolverFailed(SplitProError, RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class ConfigParseError(SplitProError, ValueError):
    def __init__(self, message, path=None, line=None, field=None):
        parts = [str(p) for p in (path, line) if p is not None]
        if field is not None:
            parts.append(f"field '{field}'")
        super().__init__(": ".join(parts + [message]))
        self.path = path
        self.line = line
        self.field = field
