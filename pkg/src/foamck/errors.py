"""Exception hierarchy shared by all foamck modules."""


class FoamError(Exception):
    """Base class for every error raised by foamck."""


class PreconditionError(FoamError, ValueError):
    """An operation was called with arguments violating its contract."""


class ParseError(FoamError, ValueError):
    """Syntax error with a position (character offset) and optional line number."""

    def __init__(self, message, pos=None, line=None):
        self.message = message
        self.pos = pos
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if pos is not None:
            where.append(f"col {pos + 1}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class SupportBoundaryError(FoamError, ArithmeticError):
    """Evaluation of a bump kernel at (rounding distance of) its support boundary."""


class RadiusCollapse(FoamError):
    """Coefficient growth signals a singularity too close to the expansion center."""

    def __init__(self, degree, message="radius collapse"):
        self.degree = degree
        super().__init__(f"{message} at degree {degree}")


class ComplementNotDense(FoamError):
    """A singularity set failed the dense-complement validation."""

    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class CoverageLoss(FoamError):
    """Shrinking a singularity set would uncover a detected blow-up locus."""


class BudgetViolation(FoamError):
    """The measure budget cannot be met at the configured resolution."""


class NoSeed(FoamError):
    """No tile on the initial hypersurface admits a convergent local solution."""


class RepresentationError(FoamError):
    """A limsup family failed the spot check as a representation of its set."""
