"""
Exception hierarchy shared by the numerical services and the CLI
"""


class QFlowError(Exception):
    """Base class for every error raised by qflow"""


class ConfigurationError(QFlowError, ValueError):
    """Invalid discretization or run configuration"""


class GridMismatchError(ConfigurationError):
    """A grid cannot carry the requested band limit"""


class NonUnitPointError(QFlowError, ValueError):
    """Point evaluation requested off the unit sphere"""


class BlowUpError(QFlowError, ArithmeticError):
    """Exponential nonlinearity would overflow"""


class ResolutionError(QFlowError):
    """The discretization no longer resolves the computed quantity"""


class NonAdmissibleError(QFlowError):
    """The integral of f e^{4u} is not positive, so alpha is undefined"""


class NotPositiveSomewhereError(QFlowError):
    """Prescribed function has no positive values"""


class GaugeFailure(QFlowError):
    """Center-of-mass normalization did not converge"""


class DegenerateFunctionError(QFlowError):
    """Prescribed function has no isolated critical points"""


class IncompleteCriticalSetError(QFlowError):
    """Critical points found do not add up to the Euler characteristic"""


class SpecParseError(QFlowError, ValueError):
    """Malformed f or u0 specification string"""


class SnapshotFormatError(QFlowError, ValueError):
    """Malformed or truncated snapshot file"""
