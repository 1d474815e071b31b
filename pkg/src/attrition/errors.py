"""Exception hierarchy shared by all modules."""


class AttritionError(Exception):
    """Base class for every error raised by the package."""


class InputError(AttritionError):
    """Bad input file or record. Carries file/line context when known."""

    def __init__(self, message, *, path=None, line=None, rule=None):
        self.path = path
        self.line = line
        self.rule = rule
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        if rule is not None:
            message = f"{message} [{rule}]"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ParseError(InputError):
    pass


class RangeError(InputError):
    pass


class DuplicateError(InputError):
    pass


class NegativeCountError(InputError):
    pass


class UnknownWindowError(InputError):
    pass


class EmptyCohortError(AttritionError):
    pass


class MissingLabelError(AttritionError):
    pass


class InsufficientDataError(AttritionError):
    pass


class DegenerateError(AttritionError):
    pass


class DegenerateBaselineError(DegenerateError):
    pass


class NotPositiveDefiniteError(AttritionError):
    pass


class NonConvergenceError(AttritionError):
    """Iterative routine hit its cap. ``state`` holds the last iterate."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class HeywoodWarning(UserWarning):
    """A uniqueness estimate sits on its lower bound."""


class EmptyTeamError(AttritionError):
    pass


class SingleClassError(AttritionError):
    pass


class TinyMinorityError(AttritionError):
    pass


class EmptyNodeError(AttritionError):
    pass


class DimensionError(AttritionError):
    pass


class TooFewSamplesError(AttritionError):
    pass


class LengthMismatchError(AttritionError):
    pass


class LeakageError(AttritionError):
    """A held-out row influenced a fitted artifact."""
