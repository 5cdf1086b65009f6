"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto
0 ok / 2 config / 3 data / 4 numeric without a lookup table.
"""


class InsiderForestError(Exception):
    exit_code = 1


class ConfigError(InsiderForestError):
    exit_code = 2


class DataError(InsiderForestError):
    exit_code = 3


class NumericError(InsiderForestError):
    exit_code = 4


# form4_ingest
class MalformedXml(DataError):
    pass


class MissingRequiredField(DataError):
    pass


class EmptyDefendantList(ConfigError):
    pass


# dataset
class NonFiniteInput(DataError):
    pass


class UnknownCategory(DataError):
    pass


class InsufficientPool(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class InvalidSpec(ConfigError):
    pass


# linalg / pca
class NotCentered(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class TooFewRows(DataError):
    pass


class ZeroVariance(NumericError):
    pass


class DimensionMismatch(DataError):
    pass


class KOutOfRange(ConfigError):
    pass


# forest
class EmptyNode(NumericError):
    pass


class SingleClassInput(DataError):
    pass


class NoOobRows(NumericError):
    pass


# evaluate
class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class SingleClass(DataError):
    pass


class NoPositiveClass(DataError):
    pass


class BadK(ConfigError):
    pass


# importance
class BadCorrelationMatrix(NumericError):
    pass
