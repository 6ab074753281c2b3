"""Exception types shared across the package.

The command line maps these onto process exit codes: configuration
problems exit with 2, numerical precondition failures (kernel
resolvability, CFL) with 3, and verdict failures with 1.
"""


class MollabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MollabError):
    """Invalid or inconsistent experiment configuration."""


class PreconditionError(MollabError):
    """A numerical precondition was violated."""


class KernelWidthError(PreconditionError):
    """Kernel width outside the resolvable range [8h, 1/4]."""


class CflError(PreconditionError):
    """Time step exceeds the stability bound."""


class CostGuardError(PreconditionError):
    """Requested brute-force computation exceeds the cost guard."""


class GridMismatchError(MollabError):
    """Operands live on different grids."""
