"""Exception hierarchy. Each family maps to a CLI exit code."""


class ClmiError(Exception):
    exit_code = 1


class ConfigError(ClmiError):
    exit_code = 2


class DataError(ClmiError):
    exit_code = 3


class NumericError(ClmiError):
    exit_code = 4


# data_io
class BadMagic(DataError):
    pass


class UnsupportedVersion(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class LabelOutOfRange(DataError, ValueError):
    pass


class IoFailure(DataError):
    pass


class TooFewSamplesPerClass(DataError, ValueError):
    pass


# preprocess
class SingleChannel(DataError, ValueError):
    pass


class InvalidBand(ConfigError, ValueError):
    pass


class WindowOverrun(ConfigError, ValueError):
    pass


class ShapeMismatch(ClmiError, ValueError):
    pass


# autodiff / model
class DegenerateBatch(NumericError, ValueError):
    pass


class NotScalar(ClmiError, ValueError):
    pass


class GraphReused(ClmiError, RuntimeError):
    pass


class MissingGrad(ClmiError, RuntimeError):
    pass


class BadConfig(ConfigError, ValueError):
    pass


# synthgen
class BadSpec(ConfigError, ValueError):
    pass


# baseline
class SingularCovariance(NumericError):
    pass


class SingularScatter(NumericError):
    pass


class DegenerateTrial(NumericError, ValueError):
    pass


# harness
class EmptyTestSet(DataError, ValueError):
    pass
