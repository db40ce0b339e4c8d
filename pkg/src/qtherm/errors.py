"""Exception types shared across the package.

Every error that a solver or constructor can raise deliberately (as opposed to
programming errors) lives here so callers can catch them by domain meaning.
"""

from __future__ import annotations


class QthermError(Exception):
    """Base class for all deliberate errors raised by this package."""


class DegenerateMatsubara(QthermError):
    """A Matsubara frequency collides with the cutoff (beta*omega_c near 2*pi*l).

    The expansion coefficient has a pole there; the caller must perturb beta or
    omega_c instead of silently integrating through the singularity.
    """


class QuadratureNoConvergence(QthermError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class HierarchyTooLarge(QthermError):
    """The auxiliary-matrix count exceeds the configured memory budget."""


class StepInstability(QthermError):
    """Fixed-step integration diverged or failed the halved-step self-check."""


class NoSteadyState(QthermError):
    """Propagation reached the maximum horizon without settling."""


class DegenerateSteadyState(QthermError):
    """The generator's null space is not one-dimensional (no unique fixed point)."""


class InvalidDensity(QthermError):
    """A matrix fails the density-matrix checks (trace, Hermiticity) beyond tolerance."""


class InconsistentPureDerivative(QthermError):
    """Pure-state Fisher branch taken but r . dr is significantly nonzero."""


class DegeneratePopulation(QthermError):
    """An eigenbasis population underflows; the log-ratio frequency is undefined."""


class DivergentExponent(QthermError):
    """The displacement-weight exponent integral diverges (delta_tilde = 0, chi > 0)."""


class NoConvergence(QthermError):
    """A fixed-point iteration hit its iteration cap; carries the last residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ConfigError(QthermError):
    """A run configuration failed validation; carries the diagnostics list."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics
