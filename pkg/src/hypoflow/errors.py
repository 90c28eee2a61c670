"""Exception types shared across the package.

The CLI maps these onto exit codes: config/usage problems exit 1,
hypothesis violations exit 2, numerical failures exit 3.
"""


class HypoflowError(Exception):
    """Base class for all package errors."""


class ConfigError(HypoflowError):
    """Invalid experiment configuration or malformed model definition."""


class HypothesisViolationError(HypoflowError):
    """A structural assumption of the method fails (degenerate noise,
    rank-deficient spanning family, non-positive local constants).

    Carries the witness point when one exists.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NumericalFailureError(HypoflowError):
    """The computation ran but produced no usable result (all paths
    exploded, ill-conditioned Malliavin matrices on most paths, ...)."""
