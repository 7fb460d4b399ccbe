"""
Exception hierarchy shared by the engines, the config layer and the CLI.
"""

from typing import Optional


class OdgridError(Exception):
    """Base class for every error raised by odgrid"""


class ParameterError(OdgridError, ValueError):
    """Invalid model, grid or market parameter"""


class DomainError(ParameterError):
    """Argument outside the domain of the function"""


class SizeError(ParameterError):
    """Too few knots or lattice nodes"""


class OrderingError(ParameterError):
    """Axis values not strictly increasing"""


class SpacingError(ParameterError):
    """Axis not uniformly spaced where uniform spacing is required"""


class DegenerateCorrelationError(ParameterError):
    """Correlation structure too close to singular for the stencil"""


class NumericError(OdgridError, ArithmeticError):
    """Numerical failure, optionally located at a time step and node"""

    def __init__(self, message: str, step: Optional[int] = None, node=None):
        self.step = step
        self.node = node
        where = []
        if step is not None:
            where.append(f"step {step}")
        if node is not None:
            where.append(f"node {node}")
        if where:
            message = f"{message} (at {', '.join(where)})"
        super().__init__(message)


class StabilityError(NumericError):
    """Explicit scheme left its stability region (dt too large for the vol level)"""


class ImpliedVolError(NumericError):
    """Premium outside the no-arbitrage bounds of the Black formula"""


class ConfigError(OdgridError, ValueError):
    """Invalid pricing configuration"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
