"""Exception hierarchy shared by all solver modules."""


class AxiswirlError(Exception):
    """Base class for all package errors."""


class ConfigError(AxiswirlError):
    """Invalid configuration key, value, or constraint violation."""


class StateError(AxiswirlError):
    """Solver state is inconsistent (e.g. extremum tracking failed upstream)."""


class ExtremumError(StateError):
    """Extremum location failed."""


class ExtremumAtBoundaryError(ExtremumError):
    """Global maximum sits on the domain boundary (domain too small, or the
    tracked peak left the frame)."""


class NoStrictMaximumError(ExtremumError):
    """Field has no strict interior maximum (flat or degenerate fit)."""


class EllipticError(AxiswirlError):
    """Elliptic solve failed."""


class EllipticConvergenceError(EllipticError):
    def __init__(self, residual, tol, iterations):
        self.residual = residual
        self.tol = tol
        self.iterations = iterations
        super().__init__(
            f"elliptic solver stalled at residual {residual:.3e} "
            f"(tol {tol:.3e}) after {iterations} iterations"
        )


class NumericalBlowupError(AxiswirlError):
    """Non-finite values or runaway amplitudes appeared in the scheme."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(message if where is None else f"{message} at {where}")


class DegenerateScalingError(AxiswirlError):
    """c_lz == c_psi: the rate inversion has no finite blowup time."""


class StagnationError(AxiswirlError):
    """Time step collapsed to zero."""


class DataError(AxiswirlError):
    """Bad time-series data handed to a fitting routine."""


class SnapshotFormatError(AxiswirlError):
    """Snapshot/checkpoint bytes are malformed, truncated, or wrong version."""
