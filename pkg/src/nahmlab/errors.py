"""Exception types shared across the package."""


class NahmLabError(Exception):
    """Base class for all package errors."""


class InvalidLatticeError(NahmLabError):
    """Lattice basis is singular or otherwise unusable."""


class ValidationError(NahmLabError):
    """Structured invariant violation.

    Carries a list of (name, residual) pairs naming each failed identity.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{name} (residual {res:.3e})" for name, res in self.violations)
        super().__init__(msg or "validation failed")


class ResourceLimitError(NahmLabError):
    """A configured hard limit (mode count, step count) was exceeded."""


class BlowUpError(NahmLabError):
    """Integration reached a pole; carries the last valid time."""

    def __init__(self, t_last, message=None):
        self.t_last = t_last
        super().__init__(message or f"step underflow near t = {t_last:.6g} (blow-up)")


class NoSolutionError(NahmLabError):
    """Boundary-value solve did not converge; carries the residual history."""

    def __init__(self, history, message=None):
        self.history = list(history)
        super().__init__(message or "no heteroclinic solution found")


class GapError(NahmLabError):
    """Dual-torus point too close to a spectral/singular point."""


class NumericalError(NahmLabError):
    """Ill-conditioned numerics (orthonormalization failure etc.)."""


class LinkError(NahmLabError):
    """Frame overlap too degenerate to define a link unitary."""


class CertificationError(NahmLabError):
    """A result exists but fails its certification bound."""
