"""Phase-locked states: enumeration, index classification, Lyapunov functional.

The balance equation Gamma(x) = -C^{-1} Omega =: v fixes each component up
to the two preimages Gamma^{-1}(v_i) and pi - Gamma^{-1}(v_i), giving 2^N
equilibria indexed by a bit pattern.  For k > -1 the unstable dimension of
each equilibrium equals the number of flipped components (nu_pi = nu_u,
nu0 = nu_s), which the index machinery here makes checkable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .errors import (NearSingularC, NoConvergence, NoEquilibria,
                     NonHyperbolic, SingularMatrix)
from .model import Parameters, coupling_matrix, jacobian, torus_gap, vector_field
from .numerics import eigenvalues, newton, solve_linear


@dataclass(frozen=True)
class EquilibriumIndices:
    """Component counts (nu0 at the base branch, nu_pi flipped) and
    stable/unstable manifold dimensions."""

    nu0: int
    nu_pi: int
    nu_u: int
    nu_s: int


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """One phase-locked state.

    pattern bit i is set when component i sits on the flipped branch
    pi - Gamma^{-1}(v_i); indices is None when the spectrum is too close
    to the imaginary axis to classify.
    """

    pattern: tuple[int, ...]
    point: np.ndarray
    spectrum: np.ndarray
    indices: EquilibriumIndices | None

    @property
    def pattern_int(self) -> int:
        """Pattern read as a binary integer, first component most significant."""
        out = 0
        for bit in self.pattern:
            out = (out << 1) | bit
        return out


def _branch_values(p: Parameters) -> tuple[np.ndarray, np.ndarray]:
    """Per-component branch values (base, flipped) solving Gamma(x_i) = v_i."""
    if abs(p.k + 1.0) < 1e-8:
        raise NearSingularC(
            f"k={p.k} is within 1e-8 of the degenerate value -1")
    C = coupling_matrix(p.N, p.k)
    v = solve_linear(C, -p.omega)
    peak = p.gamma.peak
    # strictly beyond the peak there is no preimage; exactly at the peak
    # (delta = pi/2 collapse) both branches coincide at pi/2
    if np.any(np.abs(v) > peak + 1e-12):
        worst = int(np.argmax(np.abs(v)))
        raise NoEquilibria(
            f"|v_{worst + 1}| = {abs(v[worst]):.6g} exceeds the coupling "
            f"peak {peak:.6g}; the balance equation has no solution")
    base = np.array([p.gamma.inverse_principal(vi) for vi in v])
    return base, np.pi - base


def _pattern_bits(pattern_int: int, N: int) -> tuple[int, ...]:
    return tuple((pattern_int >> (N - 1 - i)) & 1 for i in range(N))


def enumerate_equilibria(p: Parameters,
                         refine_tol: float = 1e-12) -> list[Equilibrium]:
    """All 2^N equilibria in canonical order (pattern as binary integer).

    Each point is polished by Newton to the requested residual; spectra are
    attached, and indices are attached where the equilibrium is hyperbolic
    (None otherwise, e.g. at delta = pi/2).
    """
    base, flipped = _branch_values(p)
    out: list[Equilibrium] = []
    for pattern_int in range(1 << p.N):
        bits = _pattern_bits(pattern_int, p.N)
        point = np.where(np.array(bits, dtype=bool), flipped, base)
        residual = float(np.max(np.abs(vector_field(point, p))))
        if residual > refine_tol:
            try:
                point = newton(lambda x: vector_field(x, p), point,
                               jac=lambda x: jacobian(x, p), tol=refine_tol)
            except (SingularMatrix, NoConvergence):
                if residual > 1e-10:
                    raise
        # reassign bits by nearest branch value; ties keep the constructed bit
        d_base = torus_gap(point, base)
        d_flip = torus_gap(point, flipped)
        bits = tuple(int(df < db) if abs(df - db) > 1e-12 else b
                     for b, db, df in zip(bits, d_base, d_flip))
        spectrum = eigenvalues(jacobian(point, p))
        eq = Equilibrium(pattern=bits, point=point, spectrum=spectrum,
                         indices=None)
        try:
            indices = classify(eq, p)
        except NonHyperbolic:
            indices = None
        out.append(Equilibrium(pattern=bits, point=point, spectrum=spectrum,
                               indices=indices))
    return out


def classify(eq: Equilibrium, p: Parameters) -> EquilibriumIndices:
    """Indices of an equilibrium: branch counts from the pattern, manifold
    dimensions from the spectrum of the linearization.

    Raises NonHyperbolic when an eigenvalue's real part is within 1e-8 of
    zero (expected at delta = pi/2 or k = -1).
    """
    re = eq.spectrum.real
    if np.min(np.abs(re)) < 1e-8:
        raise NonHyperbolic(
            f"eigenvalue real part {re[np.argmin(np.abs(re))]:.3e} within "
            "1e-8 of the imaginary axis")
    nu_pi = int(sum(eq.pattern))
    return EquilibriumIndices(nu0=p.N - nu_pi, nu_pi=nu_pi,
                              nu_u=int(np.sum(re > 0.0)),
                              nu_s=int(np.sum(re < 0.0)))


def hyperbolicity_margin(eq: Equilibrium) -> float:
    """Distance of the spectrum from the imaginary axis: min |Re lambda|."""
    return float(np.min(np.abs(eq.spectrum.real)))


def lyapunov_E(x: np.ndarray, p: Parameters) -> float:
    """Potential E(x) = sum_i [integral_0^{x_i} Gamma - Gamma(delta) x_i].

    For the sine coupling the integral is 1 - cos(x_i).  E decreases along
    trajectories when the frequency vector is of travelling-wave type and
    k > -1, and is conserved at k = -1.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if p.gamma.antiderivative is not None:
        integrals = np.asarray(p.gamma.antiderivative(x), dtype=float)
    else:
        integrals = np.array([scipy.integrate.quad(
            lambda y: float(p.gamma.value(y)), 0.0, xi,
            epsabs=1e-12, epsrel=1e-12)[0] for xi in x])
    g_delta = float(p.gamma.value(p.delta))
    return float(np.sum(integrals - g_delta * x))


def lyapunov_rate(x: np.ndarray, p: Parameters) -> float:
    """Time derivative of lyapunov_E along the flow (travelling-wave Omega):

    -((k+1)/2) [ (G_1-G_d)^2 + (G_N-G_d)^2 + sum_i (G_i - G_{i+1})^2 ]

    with G_i = Gamma(x_i), G_d = Gamma(delta).  Nonpositive for k > -1,
    identically zero at k = -1.
    """
    g = np.atleast_1d(np.asarray(p.gamma.value(np.asarray(x, float)), float))
    g_delta = float(p.gamma.value(p.delta))
    total = (g[0] - g_delta) ** 2 + (g[-1] - g_delta) ** 2
    total += float(np.sum((g[:-1] - g[1:]) ** 2))
    return -0.5 * (p.k + 1.0) * total


def connection_generic(source: Equilibrium, target: Equilibrium) -> bool:
    """Whether a connection from source to target is generic by dimension
    count: nu_pi(source) + nu0(target) > N."""
    if source.indices is None or target.indices is None:
        raise ValueError("both equilibria need computed indices")
    N = len(source.pattern)
    return source.indices.nu_pi + target.indices.nu0 > N
