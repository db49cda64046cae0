class LabError(Exception):
    """Base class for errors raised by quartic-beam-lab"""


class InvalidArgumentError(LabError, ValueError):
    """An argument is outside the documented range"""


class DegeneratePotentialError(LabError, ValueError):
    """The potential vanishes identically on the grid"""


class UnsupportedError(LabError, NotImplementedError):
    """The request is valid in principle but not implemented"""


class AssemblyError(LabError, ArithmeticError):
    """A kernel produced a non-finite value during Nyström assembly"""

    def __init__(self, i, j, x, y, value):
        self.i = i
        self.j = j
        super().__init__(
            f"Kernel value {value} at node pair ({i}, {j}) "
            f"x={list(x)} y={list(y)} is not finite"
        )


class DegenerateOperatorError(LabError, ArithmeticError):
    """The operator is identically zero"""


class PreconditionError(LabError, ArithmeticError):
    """A numerical precondition of an algorithm does not hold"""


class SpectralSingularityError(LabError, ArithmeticError):
    """M(λ) is numerically singular at a positive spectral parameter"""

    def __init__(self, lam, detail=None):
        self.lam = float(lam)
        message = f"M(λ) is numerically singular at λ={self.lam:.17g}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class LadderInconsistencyError(LabError, ArithmeticError):
    """T3 is singular on a non-trivial S3 subspace"""
