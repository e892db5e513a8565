"""
Exception types raised by the switching-diffusion toolkit
"""


class SwitchSimError(Exception):
    """Base class for all toolkit errors"""


class DimensionError(SwitchSimError, ValueError):
    """Array argument has the wrong shape"""


class RateBoundError(SwitchSimError, ValueError):
    """A rate q_ij(x) reached the declared uniform bound M"""

    def __init__(self, message: str, i: int = None, j: int = None, rate: float = None):
        super().__init__(message)
        self.i = i
        self.j = j
        self.rate = rate


class DivergenceError(SwitchSimError, RuntimeError):
    """A simulated state became non-finite or exceeded the divergence bound"""

    def __init__(self, message: str, step: int = None, path_index: int = None):
        super().__init__(message)
        self.step = step
        self.path_index = path_index


class CapabilityError(SwitchSimError):
    """The model lacks a callable the operation needs (Jacobians, rate derivatives)"""


class EstimationFailedError(SwitchSimError):
    """Every Monte Carlo path aborted"""


class OracleError(SwitchSimError):
    """A deterministic oracle did not converge"""


class DomainError(SwitchSimError, ValueError):
    """Argument outside the mathematical domain of the operation"""


class ConfigError(SwitchSimError, ValueError):
    """Invalid run configuration"""

    def __init__(self, message: str, key: str = None):
        super().__init__(message)
        self.key = key
