"""Exception hierarchy shared by all modules."""


class EnkfLabError(Exception):
    """Base class for every error raised by this package."""


class DegenerateModel(EnkfLabError, ValueError):
    """Model violates controllability/observability (sigma_B = 0 or H = 0) or Sigma0 <= 0."""


class StepTooLarge(EnkfLabError, ValueError):
    pass


class NonPositiveVariance(EnkfLabError, ArithmeticError):
    """A variance integration step produced a value <= 0; dt is too coarse."""


class EnsembleCollapse(EnkfLabError, ArithmeticError):
    """Empirical variance fell below the collapse threshold."""


class BadSpec(EnkfLabError, ValueError):
    pass


class LengthMismatch(EnkfLabError, ValueError):
    pass


class EmptyWindow(EnkfLabError, ValueError):
    pass


class NonPositiveValue(EnkfLabError, ValueError):
    pass


class ConfigError(EnkfLabError, ValueError):
    pass
