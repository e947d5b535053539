"""Exception hierarchy shared by every module of the package."""


class TwoLayerError(Exception):
    """Base class for all errors raised by ``twolayer``."""


class InvalidPhaseType(TwoLayerError, ValueError):
    pass


class SubordinatorPath(TwoLayerError, ValueError):
    """The surplus process would have monotone (non-decreasing) paths."""


class InvalidProblem(TwoLayerError, ValueError):
    pass


class PoleAtTheta(TwoLayerError, ValueError):
    pass


class NoBracket(TwoLayerError, RuntimeError):
    pass


class NonDistinctRoots(TwoLayerError, ArithmeticError):
    """Two roots of psi(s) = q coincide; the closed-form scale function needs them distinct."""


class WrongRootCount(TwoLayerError, ArithmeticError):
    pass


class OutOfRange(TwoLayerError, ValueError):
    pass


class NegativeStart(TwoLayerError, ValueError):
    pass


class NotApplicable(TwoLayerError, ValueError):
    pass


class BracketFailure(TwoLayerError, ArithmeticError):
    pass


class InvalidConfig(TwoLayerError, ValueError):
    pass
