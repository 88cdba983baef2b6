"""Exception hierarchy shared by all modules."""


class HomogError(Exception):
    """Base class for every error raised by this package."""


class GridMismatch(HomogError):
    pass


class GridTooCoarse(HomogError):
    pass


class SingularCell(HomogError):
    pass


class NotCoercive(HomogError):
    pass


class NotStratified(HomogError):
    pass


class DegeneratePivot(HomogError):
    pass


class UnderResolved(HomogError):
    """The grid cannot resolve the layers of the requested epsilon."""


class QuadratureFailure(HomogError):
    pass


class SolverDivergence(HomogError):
    """Iterative solve hit maxiter without reaching the requested tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SubdomainNotInterior(HomogError):
    pass


class ConfigInvalid(HomogError):
    pass
