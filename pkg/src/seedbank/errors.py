"""Exception hierarchy shared by all modules."""


class SeedbankError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(SeedbankError, ValueError):
    """A parameter is outside its admissible range."""


class RegimeError(SeedbankError):
    """A formula was requested outside the parameter regime where it holds.

    The message names the violated hypothesis.
    """


class ResourceError(SeedbankError, MemoryError):
    """A requested computation exceeds the configured memory budget."""


class IncompleteBoundaryError(SeedbankError):
    """Boundary types do not cover every coordinate reachable from the window."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(str(m) for m in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"boundary types missing for coordinates: {shown}{more}")
