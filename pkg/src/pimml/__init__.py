"""Software model of a processing-in-memory machine and classical ML training
workloads (linear/logistic regression, decision trees, K-means) that run on it
as host-orchestrated, bank-parallel kernels."""

from .errors import (
    CapacityError,
    ConfigError,
    FixedPointOverflowError,
    FormatMismatchError,
    IsolationError,
    KernelLaunchError,
    PimmlError,
)
from .fixedpoint import Q8_8, Q16_16, FixedScalar, QFormat, WideAccumulator
from .layout import Dataset, partition_rows
from .pimsim import PimConfig, PimDevice, create_device, launch

__all__ = [
    "PimmlError",
    "ConfigError",
    "CapacityError",
    "FixedPointOverflowError",
    "FormatMismatchError",
    "IsolationError",
    "KernelLaunchError",
    "QFormat",
    "Q8_8",
    "Q16_16",
    "FixedScalar",
    "WideAccumulator",
    "Dataset",
    "partition_rows",
    "PimConfig",
    "PimDevice",
    "create_device",
    "launch",
]

__version__ = "0.1.0"
