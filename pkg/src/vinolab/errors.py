"""Exception hierarchy shared by every module.

The CLI maps ``BudgetExceeded`` (and subclasses) to exit code 2 and
``ValidationError`` (and subclasses) to exit code 3.
"""


class VinolabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(VinolabError, ValueError):
    """Input violates a documented precondition."""


class BudgetExceeded(VinolabError):
    """A configured enumeration or memory guard tripped."""


class QuadratureBudgetExceeded(BudgetExceeded):
    """Required quadrature panels or grid points exceed the configured cap."""


class DepthBudgetExceeded(BudgetExceeded):
    """Iteration tree would grow beyond the configured node cap."""


class NonIntegerResult(VinolabError):
    """Exact-grid torus average did not land on an integer."""


class DegenerateExponent(ValidationError):
    """A defining relation for the weights has a vanishing denominator."""


class SingularSystem(ValidationError):
    """Linear system is singular or Delta hits a pole of the recursion."""


class DimensionTooSmall(ValidationError):
    """Appendix systems need n >= 3."""


class NonAffine(VinolabError):
    """omega_1 failed the three-point affinity check (solver bug)."""


class EmptySelection(ValidationError):
    """No records matched the requested plot selection."""
