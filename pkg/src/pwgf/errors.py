"""Exception types shared across the package."""


class ParameterDomainError(ValueError):
    """A distribution parameter lies outside its valid domain."""


class SupportError(ValueError):
    """A point has zero probability mass where positive mass is required."""


class BoundaryError(SupportError):
    """Score requested at a boundary parameter (e.g. Bernoulli p in {0, 1})."""


class CapacityError(ValueError):
    """An exact enumeration would exceed the configured atom budget."""


class NumericError(ArithmeticError):
    """A non-finite value appeared during a numerical update."""
