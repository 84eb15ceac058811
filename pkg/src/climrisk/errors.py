"""Exception taxonomy shared across the pipeline.

Exit-code mapping used by the CLI: config errors -> 1, parse errors -> 2,
pipeline-order errors -> 3, numerical failures -> 4.
"""


class ClimriskError(Exception):
    """Base class for all package errors."""


# --- configuration ---------------------------------------------------------

class ConfigInvalid(ClimriskError):
    pass


# --- parsing / input validation --------------------------------------------

class ParseError(ClimriskError):
    pass


class MissingColumn(ParseError):
    pass


class NumericParse(ParseError):
    pass


class DuplicateFirmId(ParseError):
    pass


class DuplicateCountry(ParseError):
    pass


class OutOfRangeScore(ParseError):
    pass


class EmptyInput(ParseError):
    pass


class TooFewPoints(ParseError):
    pass


class ZeroRevenue(ParseError):
    pass


class DegenerateSeries(ParseError):
    pass


class WeightMismatch(ParseError):
    pass


class SpecInvalid(ParseError):
    pass


# --- pipeline order ---------------------------------------------------------

class MissingUpstream(ClimriskError):
    pass


class HorizonMissing(MissingUpstream):
    pass


# --- numerical failures -----------------------------------------------------

class NumericalError(ClimriskError):
    pass


class DomainError(NumericalError):
    pass


class GordonInvalid(NumericalError):
    pass


class DegenerateGrowth(NumericalError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class InvalidInputs(NumericalError):
    pass


class EmptyCluster(NumericalError):
    pass


class OptimizerFailed(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class UnsortedLambdas(NumericalError):
    pass


class EmptyLosses(NumericalError):
    pass


class EmptyTail(NumericalError):
    pass
