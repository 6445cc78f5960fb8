"""Exception hierarchy shared by all modules.

DataError subclasses indicate problems with user-supplied inputs (CLI exit
code 3); NumericError subclasses indicate failures inside the numerics
(CLI exit code 4).
"""


class HybridTvpError(Exception):
    pass


class DataError(HybridTvpError):
    pass


class NumericError(HybridTvpError):
    pass


# --- data errors ---------------------------------------------------------

class InsufficientData(DataError):
    pass


class SingularDesign(DataError):
    pass


class RaggedCsv(DataError):
    pass


class MissingValue(DataError):
    pass


class NonPositiveForLog(DataError):
    pass


class UnknownTransform(DataError):
    pass


class NotAPermutation(DataError):
    pass


class EmptyDraws(DataError):
    pass


class EmptyCell(DataError):
    pass


class BenchmarkZero(DataError):
    pass


class DegenerateVariance(DataError):
    pass


# --- numeric errors ------------------------------------------------------

class NotPositiveDefinite(NumericError):
    pass


class DimensionMismatch(NumericError):
    pass


class InvalidParameters(NumericError):
    pass


class RejectionLimitExceeded(NumericError):
    pass


class ExplosiveSimulation(NumericError):
    pass


class ExplosiveForecast(NumericError):
    pass
