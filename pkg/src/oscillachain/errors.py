"""Exception types raised across the package.

Everything derives from OscillaChainError so callers can catch library
failures without swallowing programming errors such as TypeError.
"""
from __future__ import annotations


class OscillaChainError(Exception):
    """Base class for all library errors."""


class SingularMatrix(OscillaChainError):
    """Linear solve hit a pivot below the admissible threshold."""


class NoConvergence(OscillaChainError):
    """An iterative routine exhausted its budget without meeting tolerance."""


class StepSizeUnderflow(OscillaChainError):
    """Adaptive integrator was forced below the smallest representable step."""


class UnsupportedN(OscillaChainError):
    """Chain length outside the range the requested operation supports."""


class ZeroK(OscillaChainError):
    """Operation undefined at coupling ratio k = 0."""


class InvalidCouplingFunction(OscillaChainError):
    """Supplied coupling function violates a required structural property."""


class NoEquilibria(OscillaChainError):
    """Balance equation has no solution at these parameters."""


class NearSingularC(OscillaChainError):
    """Coupling matrix too close to singular for equilibrium enumeration."""


class NonHyperbolic(OscillaChainError):
    """Equilibrium has an eigenvalue too close to the imaginary axis."""


class NotOneDimensional(OscillaChainError):
    """Unstable manifold is not one-dimensional."""


class DegeneratePhaseCondition(OscillaChainError):
    """Phase anchor cannot pin the orbit because the flow is too slow there."""


class NoDoublingDirection(OscillaChainError):
    """No Floquet multiplier close enough to -1 to seed a doubled orbit."""


class NotSaddleFocusOrReal(OscillaChainError):
    """Equilibrium spectrum matches neither saddle-focus nor real saddle."""


class AmbiguousBifurcation(OscillaChainError):
    """Multiplier crossings do not identify a single bifurcation type."""
