"""Exception hierarchy shared across the library.

CLI exit codes: ConfigError -> 2, DataFormatError -> 3, CheckpointError -> 4.
"""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class DegenerateBatch(ContractViolation):
    """Batch statistics are undefined (fewer than 2 elements per channel)."""


class UninitializedStatistics(RuntimeError):
    """Eval-mode BatchNorm on a branch that never received a training update."""


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad value, bad preset)."""


class DataFormatError(ValueError):
    """Malformed dataset file (wrong size, bad label byte, missing file)."""


class CheckpointError(ValueError):
    """Unreadable, corrupt, or version-incompatible checkpoint."""


class OracleFailure(AssertionError):
    """The finite-difference oracle hit a non-finite value."""
