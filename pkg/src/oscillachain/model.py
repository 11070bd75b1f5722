"""Oscillator chain model and its phase-difference reduction.

A chain of N+1 phase oscillators with asymmetric nearest-neighbour coupling
(up-chain gain K_u, down-chain gain K_d) reduces, after rescaling time by
K_u, to N phase differences x_i = theta_{i-1} - theta_i obeying

    dx/dt = Omega + C Gamma(x),

where C is tridiagonal with diagonal -(1+k), superdiagonal 1 and
subdiagonal k = K_d/K_u, and Gamma acts componentwise.  This module owns
the model data types, the closed-form quantities of that reduction, and
the two parameter symmetries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

from .errors import InvalidCouplingFunction, UnsupportedN, ZeroK
from .numerics import sort_spectrum

ArrayMap = Callable[[np.ndarray], np.ndarray]


def _validate_coupling(value: ArrayMap, derivative: ArrayMap,
                       samples: int = 512, tol: float = 1e-8) -> None:
    """Check the structural properties a coupling function must satisfy.

    Sampled: 2pi-periodicity, |value| <= 1, odd symmetry about 0, even
    symmetry about pi/2, strictly increasing on (0, pi/2), and consistency
    of the supplied derivative with finite differences.
    """
    x = np.linspace(-2.0 * np.pi, 2.0 * np.pi, samples)
    g = np.asarray(value(x), dtype=float)
    if np.max(np.abs(value(x + 2.0 * np.pi) - g)) > tol:
        raise InvalidCouplingFunction("coupling function is not 2pi-periodic")
    if np.max(np.abs(g)) > 1.0 + tol:
        raise InvalidCouplingFunction("coupling function exceeds unit bound")
    if np.max(np.abs(value(-x) + g)) > tol:
        raise InvalidCouplingFunction("coupling function is not odd")
    if np.max(np.abs(value(np.pi / 2 - x) - value(np.pi / 2 + x))) > tol:
        raise InvalidCouplingFunction(
            "coupling function is not even about pi/2")
    interior = np.linspace(1e-3, np.pi / 2 - 1e-3, samples)
    if np.min(np.asarray(derivative(interior), dtype=float)) <= 0.0:
        raise InvalidCouplingFunction(
            "coupling derivative must be positive on (0, pi/2)")
    step = 1e-6
    fd = (np.asarray(value(x + step)) - np.asarray(value(x - step))) / (2 * step)
    if np.max(np.abs(fd - np.asarray(derivative(x), dtype=float))) > 1e-5:
        raise InvalidCouplingFunction(
            "supplied derivative disagrees with finite differences")


@dataclass(frozen=True, eq=False)
class CouplingFunction:
    """Odd, 2pi-periodic coupling nonlinearity with its derivative.

    antiderivative is the map x -> integral of value from 0 to x; when
    absent it is evaluated by adaptive quadrature where needed.
    """

    kind: str
    value: ArrayMap
    derivative: ArrayMap
    antiderivative: ArrayMap | None = None

    @classmethod
    def sine(cls) -> "CouplingFunction":
        return cls(kind="sine", value=np.sin, derivative=np.cos,
                   antiderivative=lambda x: 1.0 - np.cos(x))

    @classmethod
    def custom(cls, value: ArrayMap, derivative: ArrayMap,
               antiderivative: ArrayMap | None = None) -> "CouplingFunction":
        _validate_coupling(value, derivative)
        return cls(kind="custom-odd-periodic", value=value,
                   derivative=derivative, antiderivative=antiderivative)

    @property
    def peak(self) -> float:
        """Maximum of the coupling function, attained at pi/2."""
        return float(self.value(np.pi / 2))

    def inverse_principal(self, v: float) -> float:
        """Branch of the inverse into [-pi/2, pi/2]; requires |v| <= peak.

        Values at the peak (up to rounding) map to the branch endpoint
        +-pi/2, where the two inverse branches coincide.
        """
        peak = self.peak
        if abs(v) > peak + 1e-12:
            raise ValueError(f"|{v}| exceeds the coupling peak {peak}")
        v = min(max(v, -peak), peak)
        if self.kind == "sine":
            return float(np.arcsin(v))
        return float(scipy.optimize.brentq(
            lambda x: float(self.value(x)) - v, -np.pi / 2, np.pi / 2,
            xtol=1e-14))


SINE = CouplingFunction.sine()


@dataclass(frozen=True, eq=False)
class Parameters:
    """Reduced-system parameters: chain length, coupling ratio, detuning.

    omega holds the rescaled frequency differences; travelling marks it as
    generated from (k, delta) by the travelling-wave construction, which
    lets parameter continuation rebuild it consistently.  time_reversed
    records that canonicalization flipped the time direction (k < -1 case).
    """

    N: int
    k: float
    delta: float
    omega: np.ndarray
    gamma: CouplingFunction = field(default_factory=CouplingFunction.sine)
    travelling: bool = False
    time_reversed: bool = False

    def __post_init__(self) -> None:
        if self.N < 1:
            raise UnsupportedN(f"chain length N={self.N} must be >= 1")
        omega = np.array(self.omega, dtype=float)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        if omega.shape != (self.N,):
            raise ValueError(
                f"omega has shape {omega.shape}, expected ({self.N},)")
        if not (np.all(np.isfinite(omega)) and math.isfinite(self.k)
                and math.isfinite(self.delta)):
            raise ValueError("parameters must be finite")

    @classmethod
    def travelling_wave(cls, N: int, k: float, delta: float,
                        gamma: CouplingFunction | None = None) -> "Parameters":
        gamma = gamma or SINE
        omega = travelling_wave_omega(N, k, delta, gamma)
        return cls(N=N, k=k, delta=delta, omega=omega, gamma=gamma,
                   travelling=True)

    @classmethod
    def canonical(cls, N: int, k: float, delta: float,
                  gamma: CouplingFunction | None = None,
                  omega: Sequence[float] | None = None) -> "Parameters":
        """Build parameters normalized into delta >= 0 and k >= -1.

        Negative delta is removed by the sign symmetry (x -> -x,
        Omega -> -Omega); k < -1 by the chain-reversal symmetry, which
        also reverses time.
        """
        gamma = gamma or SINE
        if omega is None:
            p = cls.travelling_wave(N, k, delta, gamma)
        else:
            p = cls(N=N, k=k, delta=delta, omega=np.asarray(omega, float),
                    gamma=gamma)
        if p.delta < 0.0:
            p = cls(N=p.N, k=p.k, delta=-p.delta, omega=-p.omega,
                    gamma=p.gamma, travelling=p.travelling,
                    time_reversed=p.time_reversed)
        if p.k < -1.0:
            p, _ = symmetry_invert_k(p, np.zeros(p.N))
        return p

    def with_delta(self, delta: float) -> "Parameters":
        omega = (travelling_wave_omega(self.N, self.k, delta, self.gamma)
                 if self.travelling else self.omega)
        return Parameters(N=self.N, k=self.k, delta=delta, omega=omega,
                          gamma=self.gamma, travelling=self.travelling,
                          time_reversed=self.time_reversed)

    def with_k(self, k: float) -> "Parameters":
        omega = (travelling_wave_omega(self.N, k, self.delta, self.gamma)
                 if self.travelling else self.omega)
        return Parameters(N=self.N, k=k, delta=self.delta, omega=omega,
                          gamma=self.gamma, travelling=self.travelling,
                          time_reversed=self.time_reversed)


@dataclass(frozen=True, eq=False)
class FullChainSystem:
    """The unreduced chain: N+1 oscillators with their natural frequencies."""

    num_oscillators: int
    omega_natural: np.ndarray
    K_u: float
    K_d: float
    gamma: CouplingFunction = field(default_factory=CouplingFunction.sine)

    def __post_init__(self) -> None:
        if self.num_oscillators < 2:
            raise UnsupportedN("need at least two oscillators")
        if self.K_u == 0.0:
            raise ValueError("K_u must be nonzero for the time rescaling")
        omega = np.array(self.omega_natural, dtype=float)
        omega.setflags(write=False)
        object.__setattr__(self, "omega_natural", omega)
        if omega.shape != (self.num_oscillators,):
            raise ValueError("omega_natural length must equal num_oscillators")

    @classmethod
    def from_parameters(cls, p: Parameters, K_u: float,
                        omega_base: float = 0.0) -> "FullChainSystem":
        """Lift reduced parameters to a full chain with oscillator-0 frequency
        omega_base; inverts omega_j = (omega_natural[j-1] - omega_natural[j])/K_u.
        """
        omega = np.empty(p.N + 1)
        omega[0] = omega_base
        omega[1:] = omega_base - K_u * np.cumsum(p.omega)
        return cls(num_oscillators=p.N + 1, omega_natural=omega,
                   K_u=K_u, K_d=p.k * K_u, gamma=p.gamma)


def coupling_matrix(N: int, k: float) -> np.ndarray:
    """Tridiagonal reduction matrix: diagonal -(1+k), super 1, sub k."""
    if N < 1:
        raise UnsupportedN(f"N={N} must be >= 1")
    C = np.diag(np.full(N, -(1.0 + k)))
    idx = np.arange(N - 1)
    C[idx, idx + 1] = 1.0
    C[idx + 1, idx] = k
    return C


def coupling_matrix_determinant(N: int, k: float) -> float:
    """det C in closed form: (-1)^N (k^{N+1}-1)/(k-1), i.e. the geometric
    sum (-1)^N sum_{j=0}^{N} k^j, which also covers the k=1 limit (-1)^N (N+1).
    """
    powers = np.power(float(k), np.arange(N + 1))
    return float((-1.0) ** N * np.sum(powers))


def apply_coupling(v: np.ndarray, k: float) -> np.ndarray:
    """Product C v without forming C."""
    out = -(1.0 + k) * v
    out[:-1] += v[1:]
    out[1:] += k * v[:-1]
    return out


def vector_field(x: np.ndarray, p: Parameters) -> np.ndarray:
    """Phase-difference velocities Omega + C Gamma(x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.N,):
        raise ValueError(f"state has shape {x.shape}, expected ({p.N},)")
    return p.omega + apply_coupling(np.asarray(p.gamma.value(x), float), p.k)


def jacobian(x: np.ndarray, p: Parameters) -> np.ndarray:
    """Linearization C diag(Gamma'(x_1), ..., Gamma'(x_N))."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.N,):
        raise ValueError(f"state has shape {x.shape}, expected ({p.N},)")
    d = np.asarray(p.gamma.derivative(x), dtype=float)
    return coupling_matrix(p.N, p.k) * d[None, :]


def c_eigenvalues_closed_form(N: int, k: float) -> np.ndarray:
    """Spectrum of C: -(1+k) + 2 sqrt(k) cos(j pi/(N+1)), j = 1..N.

    For k < 0 the square root is taken as i sqrt(|k|), giving complex
    conjugate pairs.
    """
    if N < 1:
        raise UnsupportedN(f"N={N} must be >= 1")
    sqrt_k = np.sqrt(complex(k))
    j = np.arange(1, N + 1)
    vals = -(1.0 + k) + 2.0 * sqrt_k * np.cos(j * np.pi / (N + 1))
    return sort_spectrum(vals)


def travelling_wave_omega(N: int, k: float, delta: float,
                          gamma: CouplingFunction | None = None) -> np.ndarray:
    """Frequency differences that make the uniform state (delta,...,delta)
    an equilibrium: (k Gamma(delta), 0, ..., 0, Gamma(delta)).
    """
    if N < 2:
        raise UnsupportedN(
            "travelling-wave frequencies need N >= 2; the first and last "
            "rows prescribe conflicting values for a single component")
    gamma = gamma or SINE
    g = float(gamma.value(delta))
    omega = np.zeros(N)
    omega[0] = k * g
    omega[-1] = g
    return omega


def natural_frequencies(omega_base: float, K_u: float, K_d: float,
                        delta: float, N: int,
                        gamma: CouplingFunction | None = None) -> np.ndarray:
    """Oscillator frequencies realizing the travelling wave on the full chain:
    omega_0 = omega + K_d Gamma(delta), interior omega, omega_N = omega - K_u Gamma(delta).
    """
    if N < 2:
        raise UnsupportedN("travelling-wave chain needs N >= 2")
    gamma = gamma or SINE
    g = float(gamma.value(delta))
    omega = np.full(N + 1, float(omega_base))
    omega[0] += K_d * g
    omega[-1] -= K_u * g
    return omega


def full_chain_field(theta: np.ndarray, sys: FullChainSystem) -> np.ndarray:
    """Phase velocities of the unreduced chain.

    End oscillators couple one-sidedly: oscillator 0 only up-chain (K_u),
    oscillator N only down-chain (K_d).
    """
    theta = np.asarray(theta, dtype=float)
    n = sys.num_oscillators
    if theta.shape != (n,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({n},)")
    g = sys.gamma.value
    dtheta = sys.omega_natural.copy()
    dtheta[:-1] += sys.K_u * np.asarray(g(theta[1:] - theta[:-1]), float)
    dtheta[1:] += sys.K_d * np.asarray(g(theta[:-1] - theta[1:]), float)
    return dtheta


def reduce_full_state(theta: np.ndarray) -> np.ndarray:
    """Phase differences x_i = theta_{i-1} - theta_i of a full-chain state."""
    theta = np.asarray(theta, dtype=float)
    return theta[:-1] - theta[1:]


def symmetry_negate_delta(x: np.ndarray) -> np.ndarray:
    """State half of the sign symmetry (delta, Omega, x) -> (-delta, -Omega, -x)."""
    return -np.asarray(x, dtype=float)


def symmetry_invert_k(p: Parameters, x: np.ndarray) -> tuple[Parameters, np.ndarray]:
    """Chain-reversal symmetry swapping the up/down coupling roles.

    Maps x to its component reversal and k to 1/k; the transformed system,
    run in the rescaled time t_new = k t, follows the original trajectory
    (time-reversed when k < 0, where the rescaling flips the time axis).
    Omega maps to reversed(Omega)/k, which keeps travelling-wave frequency
    vectors travelling-wave.
    """
    if p.k == 0.0:
        raise ZeroK("chain reversal is undefined at k = 0")
    x = np.asarray(x, dtype=float)
    k_new = 1.0 / p.k
    omega_new = p.omega[::-1] / p.k
    p_new = Parameters(N=p.N, k=k_new, delta=p.delta, omega=omega_new,
                       gamma=p.gamma, travelling=p.travelling,
                       time_reversed=p.time_reversed ^ (p.k < 0.0))
    return p_new, x[::-1].copy()


def torus_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise distance on the torus: min(|a-b| mod 2pi, 2pi - that)."""
    d = np.mod(np.abs(np.asarray(a, float) - np.asarray(b, float)),
               2.0 * np.pi)
    return np.minimum(d, 2.0 * np.pi - d)


def torus_distance(a: np.ndarray, b: np.ndarray) -> float:
    """2-norm of the componentwise torus distances."""
    return float(np.linalg.norm(torus_gap(a, b)))
