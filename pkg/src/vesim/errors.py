"""Exception types shared across the simulator."""


class VesimError(Exception):
    """Base class for all simulator errors."""


class ContractError(VesimError):
    """An operation was called outside its contract (wrong repr, bad argument)."""


class RankError(ContractError):
    """Field rank not supported by the requested operation."""


class SymmetryError(VesimError):
    """Spectral data violates Hermitian symmetry beyond tolerance."""


class ConfigError(VesimError):
    """Invalid run configuration; carries the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class ManufactureError(VesimError):
    """Initial-data manufacture left residuals above tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConstructionError(VesimError):
    """Compressible data construction violated a stated norm bound."""


class DivergenceError(VesimError):
    """Numerical blow-up (NaN/Inf or non-positive density) during stepping.

    Carries the last finite state so a run can report where it died.
    """

    def __init__(self, message, last_good=None, t=None, step=None):
        super().__init__(message)
        self.last_good = last_good
        self.t = t
        self.step = step
