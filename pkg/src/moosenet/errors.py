"""Exception hierarchy.

Data problems subclass :class:`DataError`, numerical breakdowns subclass
:class:`NumericalError`; the CLI maps the two families to distinct exit codes.
"""


class MooseError(Exception):
    pass


class DataError(MooseError, ValueError):
    pass


class NumericalError(MooseError, ArithmeticError):
    pass


class MalformedRow(DataError):
    def __init__(self, path, line, reason):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class DuplicateId(DataError):
    pass


class RatingOutOfRange(DataError):
    pass


class MissingPath(DataError):
    pass


class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class EmptyClip(DataError):
    pass


class SilentClean(DataError):
    pass


class SilentNoise(DataError):
    pass


class TooFewRecords(DataError):
    pass


class UtteranceTooLong(DataError):
    pass


class EmptySequence(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class TooFewDistinctValues(DataError):
    pass


class OutOfRange(DataError):
    pass


class NotNormalized(DataError):
    pass


class MissingBin(DataError):
    pass


class NotFitted(MooseError, RuntimeError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class DegenerateInput(DataError):
    pass


class MissingRecord(DataError):
    pass


class KeyMismatch(DataError):
    pass


class TooFewMembers(DataError):
    pass


class NotEnoughRatings(DataError):
    pass


class ConfigError(DataError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class SingularWithinClass(NumericalError):
    pass
