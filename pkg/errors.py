"""
QuasiLocal Errors
Exception hierarchy shared by the library and the command line.
"""


class QuasiLocalError(Exception):
    """Base class for every error raised on purpose by this package"""


class ConfigError(QuasiLocalError, ValueError):
    """Invalid experiment or solver configuration"""


class MeshError(QuasiLocalError, ValueError):
    """Unsupported mesh parameters or non-nested meshes"""


class PatternError(QuasiLocalError, ValueError):
    """Matrix does not conform to a sparsity pattern, or bad entry index"""


class DimensionMismatch(QuasiLocalError, ValueError):
    """Vector or matrix sizes do not fit together"""


class NumericalError(QuasiLocalError):
    """A numerical kernel could not deliver its contract"""


class NotPositiveDefinite(NumericalError):
    """Nonpositive pivot while factorizing a matrix expected to be SPD"""


class RankDeficientConstraints(NumericalError):
    """Constraint rows of a saddle-point system are linearly dependent"""


class SingularNormalEquations(NumericalError):
    """Unshifted Gauss-Newton normal equations are singular"""


class LineSearchFailed(NumericalError):
    """Armijo backtracking exhausted its trial budget"""


class InvalidMeasurements(QuasiLocalError, ValueError):
    """Measurement data that cannot define the misfit functional"""
