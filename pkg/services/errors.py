# services/errors.py

"""
Error hierarchy shared by every package.

Each class carries the process exit code the CLI reports for it:
0 success, 1 computation error, 2 config error, 3 capacity guard.
"""

from typing import Optional


class CuspLabError(Exception):
    exit_code: int = 1


class ComputationError(CuspLabError):
    exit_code = 1


class DimensionError(ComputationError, ValueError):
    pass


class PrecisionError(ComputationError):
    pass


class UniquenessError(ComputationError):
    pass


class UnboundedProgramError(ComputationError):
    pass


class RegionExitError(ComputationError):
    def __init__(self, message: str, exit_time: Optional[float] = None):
        super().__init__(message)
        self.exit_time = exit_time


class ConfigError(CuspLabError, ValueError):
    exit_code = 2


class CapacityError(CuspLabError):
    exit_code = 3
