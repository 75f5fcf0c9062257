class GibbsSpectraError(Exception):
    """Base class for every error raised by the services"""


class TargetError(GibbsSpectraError, ValueError):
    """Invalid target specification or ill-defined conditional"""


class SubsetError(GibbsSpectraError, ValueError):
    """Coordinate subset, family or weight vector violates its invariants"""


class OperatorError(GibbsSpectraError):
    """A constructed operator fails one of its structural invariants"""


class PreconditionError(GibbsSpectraError):
    """A check was requested on inputs outside its hypotheses"""


class EigenSolverError(GibbsSpectraError):
    """Dense eigensolver did not converge"""


class QuadratureError(GibbsSpectraError):
    """Adaptive quadrature did not reach the requested tolerance"""


class RejectionLimitError(GibbsSpectraError):
    """Rejection sampler exceeded its iteration cap"""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


class ConfigError(GibbsSpectraError, ValueError):
    """Run configuration names an unknown tolerance or option"""
