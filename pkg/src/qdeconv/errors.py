"""Exception types raised by the qdeconv library.

Everything derives from QdeconvError so callers (and the CLI) can catch
library failures without swallowing unrelated bugs.
"""

__all__ = [
    "QdeconvError",
    "InvalidImage",
    "TooSmall",
    "InvalidPsf",
    "DimensionError",
    "DomainError",
    "SnrUnreachable",
    "EmptyBasis",
    "EigensolverFailure",
    "NumericalFailure",
    "UsageError",
]


class QdeconvError(Exception):
    """Base class for all library errors."""


class InvalidImage(QdeconvError):
    """Image data is malformed (non-finite pixels, bad file, bad shape)."""


class TooSmall(QdeconvError):
    """Requested size is below the supported minimum."""


class InvalidPsf(QdeconvError):
    """Point-spread-function parameters are out of range."""


class DimensionError(QdeconvError):
    """Array sizes are inconsistent with the operator or image geometry."""


class DomainError(QdeconvError):
    """Input lies outside the mathematical domain of the operation."""


class SnrUnreachable(QdeconvError):
    """No photon-count scaling achieves the requested signal-to-noise ratio."""


class EmptyBasis(QdeconvError):
    """No eigenvalue falls below the energy cutoff."""


class EigensolverFailure(QdeconvError):
    """The iterative eigensolver did not converge within its budget."""


class NumericalFailure(QdeconvError):
    """A numerically singular system was encountered."""


class UsageError(QdeconvError):
    """Bad command-line arguments or configuration."""
