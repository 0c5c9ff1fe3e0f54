"""Exception types raised by the numerical layers."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ShapeError(ValueError):
    """A shape function violates its range or monotonicity contract."""


class RootNotBracketedError(RuntimeError):
    """A stationarity equation showed no sign change on its search interval."""


class NoSignChangeError(RuntimeError):
    """The total exponent is already nonnegative at the smallest sparsity probed."""
