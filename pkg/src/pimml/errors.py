"""Exception hierarchy shared across the package."""


class PimmlError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PimmlError):
    """Invalid configuration file or device parameters."""


class CapacityError(PimmlError):
    """Data does not fit in the available bank/scratchpad space."""


class FixedPointOverflowError(PimmlError):
    """A wide accumulator would exceed its 64-bit range."""


class FormatMismatchError(PimmlError):
    """Fixed-point operands carry different Q-formats."""


class IsolationError(PimmlError):
    """A core touched memory outside its own bank or scratchpad limits."""


class KernelLaunchError(PimmlError):
    """A core kernel raised; carries the failing core id."""

    def __init__(self, core_id: int, cause: BaseException):
        super().__init__(f"kernel failed on core {core_id}: {cause!r}")
        self.core_id = core_id
        self.cause = cause
