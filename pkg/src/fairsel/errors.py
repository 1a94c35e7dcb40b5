"""Exception hierarchy shared by every fairsel module."""


class FairselError(Exception):
    """Base class for all errors raised by fairsel."""


class ArgumentError(FairselError, ValueError):
    """An argument is out of range or inconsistent with another."""


class SchemaError(FairselError, KeyError):
    """Unknown variable, missing column, or malformed schema."""

    def __str__(self):
        # KeyError quotes its message; keep it readable.
        return str(self.args[0]) if self.args else ""


class DegenerateEvidenceError(FairselError):
    """Conditioning on an event of probability zero."""


class NumericalIntegrityError(FairselError, ArithmeticError):
    """An information quantity came out negative beyond rounding noise."""


class SizeError(FairselError):
    """A guard on alphabet, state-space or subset-lattice size was exceeded."""


class ConvergenceError(FairselError):
    """The convex solver hit its iteration cap.

    ``best`` holds the best feasible iterate found and ``objective_gap`` the
    certified bound on its suboptimality (bits).
    """

    def __init__(self, message, best=None, objective_gap=float("nan"), subset=None):
        super().__init__(message)
        self.best = best
        self.objective_gap = objective_gap
        self.subset = subset


class DecompositionIntegrityError(FairselError):
    """A PID component is negative beyond the clamp threshold."""


class TableError(FairselError):
    """A coefficient table is missing subsets required by the caller."""


class LevelError(FairselError):
    """A categorical cell holds a value outside the declared levels."""

    def __init__(self, message, row=None, column=None, value=None):
        super().__init__(message)
        self.row = row
        self.column = column
        self.value = value


class UnsupportedMetricError(FairselError):
    """The requested metric is undefined for this input (e.g. non-binary A)."""
