"""
Errors Module - Exception Hierarchy
Every failure raised by the laboratory derives from PladError
"""


class PladError(Exception):
    """Base class for all laboratory errors"""


# Parameter regime

class RegimeError(PladError, ValueError):
    """Parameters violate the hypotheses of the existence theorem"""


class PExponentOutOfRange(RegimeError):
    pass


class AlphaOutOfRange(RegimeError):
    pass


class CompetitionSumTooSmall(RegimeError):
    """alpha_p + alpha <= 1"""


class NonPositiveLambda(RegimeError):
    pass


class EmptyKWindow(RegimeError):
    pass


class ConstantDomainError(RegimeError):
    """Sharp constant or critical mass requested outside its domain"""


# Fields and functionals

class FieldError(PladError, ValueError):
    pass


class ProfileError(FieldError):
    pass


class ExponentWindowError(PladError, ValueError):
    """Exponent q or moment order k outside the admissible window"""


# Solver

class ConfigError(PladError, ValueError):
    pass


class SolverError(PladError, RuntimeError):
    pass


class NonPositivityViolation(SolverError):
    """Explicit update produced a negative density beyond round-off"""
