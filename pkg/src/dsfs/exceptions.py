"""Exception hierarchy shared across the package."""


class DsfsError(Exception):
    """Base class for all package errors."""


class InvalidConfig(DsfsError, ValueError):
    pass


class DimensionMismatch(DsfsError, ValueError):
    pass


class NumericalFailure(DsfsError):
    """Pivoting broke down; retry with perturbed tolerances."""


class SolverFailure(DsfsError):
    """An LP needed by a higher-level operation could not be solved.

    ``index`` is set when the failure happened inside a batch.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DisconnectedFeeder(DsfsError, ValueError):
    pass


class EmptyInterior(DsfsError):
    """The DER polytope ``{p : W p <= z}`` is empty."""

    def __init__(self, message, row_class=None):
        super().__init__(message)
        self.row_class = row_class


class UnboundedModel(DsfsError):
    pass


class InfeasibleModel(DsfsError):
    pass


class InvalidArchitecture(DsfsError, ValueError):
    pass


class ArchitectureMismatch(DsfsError, ValueError):
    pass


class EmptyDataset(DsfsError, ValueError):
    pass


class NonFiniteLoss(DsfsError, FloatingPointError):
    pass


class OutOfRange(DsfsError, ValueError):
    pass


class EmptyPool(DsfsError):
    pass


class InvalidCount(DsfsError, ValueError):
    pass


class EmptyTestSet(DsfsError, ValueError):
    pass
