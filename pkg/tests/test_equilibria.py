"""Equilibrium enumeration, index identities, Lyapunov functional."""
import math

import numpy as np
import pytest

from oscillachain.equilibria import (classify, connection_generic,
                                     enumerate_equilibria,
                                     hyperbolicity_margin, lyapunov_E,
                                     lyapunov_rate)
from oscillachain.errors import NearSingularC, NoEquilibria, NonHyperbolic
from oscillachain.model import Parameters, vector_field
from oscillachain.numerics import IntegratorOptions, integrate_ode

RNG = np.random.default_rng(314159)
TIGHT = IntegratorOptions(abs_tol=1e-12, rel_tol=1e-12)


def test_enumeration_counts_and_patterns():
    p = Parameters.travelling_wave(3, -0.5, 0.9)
    eqs = enumerate_equilibria(p)
    assert len(eqs) == 8
    assert [eq.pattern_int for eq in eqs] == list(range(8))
    # base pattern is the uniform state (delta, ..., delta)
    assert np.allclose(eqs[0].point, 0.9, atol=1e-10)


def test_points_are_equilibria():
    p = Parameters.travelling_wave(4, 0.8, 1.1)
    for eq in enumerate_equilibria(p):
        assert np.max(np.abs(vector_field(eq.point, p))) < 1e-10


def test_index_identities_sample():
    # unstable dimension equals the flipped-component count for k > -1
    for _ in range(25):
        N = int(RNG.integers(2, 6))
        k = float(RNG.uniform(-0.95, 3.0))
        delta = float(RNG.uniform(0.05, 1.5))
        p = Parameters.travelling_wave(N, k, delta)
        for eq in enumerate_equilibria(p):
            assert eq.indices is not None
            assert eq.indices.nu_u == eq.indices.nu_pi
            assert eq.indices.nu_s == eq.indices.nu0
            assert eq.indices.nu0 == N - sum(eq.pattern)


def test_uniform_state_is_the_only_sink():
    p = Parameters.travelling_wave(3, -0.3, 0.7)
    sinks = [eq for eq in enumerate_equilibria(p) if eq.indices.nu_u == 0]
    assert len(sinks) == 1
    assert sinks[0].pattern == (0, 0, 0)


def test_no_equilibria_when_balance_unsolvable():
    # explicit frequency vector beyond the coupling peak
    p = Parameters(N=2, k=0.5, delta=0.0, omega=np.array([3.5, 3.5]))
    with pytest.raises(NoEquilibria):
        enumerate_equilibria(p)


def test_near_singular_k_rejected():
    p = Parameters.travelling_wave(2, -1.0 + 1e-10, 0.5)
    with pytest.raises(NearSingularC):
        enumerate_equilibria(p)


def test_delta_half_pi_collapses_branches():
    # at the coupling peak both branches coincide and indices are None
    p = Parameters.travelling_wave(2, 0.5, math.pi / 2)
    eqs = enumerate_equilibria(p)
    assert len(eqs) == 4
    for eq in eqs:
        assert np.allclose(eq.point, math.pi / 2, atol=1e-8)
        assert eq.indices is None


def test_classify_nonhyperbolic_raises():
    p = Parameters.travelling_wave(2, 0.5, math.pi / 2)
    eq = enumerate_equilibria(p)[0]
    with pytest.raises(NonHyperbolic):
        classify(eq, p)


def test_hyperbolicity_margin_positive_off_peak():
    p = Parameters.travelling_wave(2, 0.5, 1.0)
    for eq in enumerate_equilibria(p):
        assert hyperbolicity_margin(eq) > 1e-3


def test_lyapunov_rate_is_chain_rule_derivative():
    # complex-step the potential along the field: exact to machine precision
    for _ in range(100):
        N = int(RNG.integers(2, 6))
        p = Parameters.travelling_wave(N, float(RNG.uniform(-0.95, 3.0)),
                                       float(RNG.uniform(0.05, 1.5)))
        x = RNG.uniform(0.0, 2.0 * np.pi, N)
        f = vector_field(x, p)
        h = 1e-7
        dE = (lyapunov_E(x + h * f, p) - lyapunov_E(x - h * f, p)) / (2 * h)
        assert lyapunov_rate(x, p) == pytest.approx(dE, abs=5e-7)


def test_lyapunov_rate_sign():
    for _ in range(50):
        N = int(RNG.integers(2, 5))
        p = Parameters.travelling_wave(N, float(RNG.uniform(-0.99, 3.0)),
                                       float(RNG.uniform(0.0, 1.5)))
        x = RNG.uniform(0.0, 2.0 * np.pi, N)
        assert lyapunov_rate(x, p) <= 1e-15


def test_energy_decreases_along_trajectory():
    p = Parameters.travelling_wave(3, -0.4, 0.9)
    x0 = RNG.uniform(0.0, 2.0 * np.pi, 3)
    r = integrate_ode(lambda t, x: vector_field(x, p), x0, (0.0, 30.0),
                      TIGHT)
    E = np.array([lyapunov_E(y, p) for y in r.y])
    assert np.all(np.diff(E) <= 1e-8)


def test_energy_conserved_at_k_minus_one():
    p = Parameters.travelling_wave(2, -1.0, 0.8)
    x0 = np.array([1.3, 4.1])
    r = integrate_ode(lambda t, x: vector_field(x, p), x0, (0.0, 100.0),
                      TIGHT)
    E = np.array([lyapunov_E(y, p) for y in r.y])
    assert float(np.max(np.abs(E - E[0]))) <= 1e-6
    assert abs(lyapunov_rate(x0, p)) == 0.0


def test_lyapunov_minimum_at_sink():
    # E has a strict local minimum at the uniform state for k > -1
    p = Parameters.travelling_wave(2, 0.3, 0.9)
    E0 = lyapunov_E(np.full(2, 0.9), p)
    for _ in range(50):
        x = 0.9 + RNG.uniform(-0.3, 0.3, 2)
        if np.allclose(x, 0.9):
            continue
        assert lyapunov_E(x, p) > E0


def test_connection_genericity_rule():
    p = Parameters.travelling_wave(3, -0.5, 0.9)
    eqs = enumerate_equilibria(p)
    by_pattern = {eq.pattern: eq for eq in eqs}
    # saddle with 2 unstable directions onto the sink: 2 + 3 > 3 generic
    assert connection_generic(by_pattern[(1, 1, 0)], by_pattern[(0, 0, 0)])
    # single-unstable saddle onto another single-unstable saddle: 1 + 2 = 3
    assert not connection_generic(by_pattern[(1, 0, 0)],
                                  by_pattern[(0, 1, 0)])
