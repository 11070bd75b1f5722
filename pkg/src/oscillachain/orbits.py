"""Rotating-wave periodic orbits: multiple shooting, Floquet analysis.

A rotating wave satisfies x(T) = x(0) + 2 pi w for a nonzero integer
winding vector w.  Orbits are located by Newton iteration on a multiple
shooting system (m segments, one anchor phase condition) and carry the
monodromy spectrum for stability and bifurcation classification.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .equilibria import Equilibrium
from .errors import (AmbiguousBifurcation, DegeneratePhaseCondition,
                     NoConvergence, NoDoublingDirection,
                     NotSaddleFocusOrReal)
from .flows import Flow
from .model import Parameters
from .numerics import IntegratorOptions, eigenvalues, solve_linear, sort_spectrum
from .serialize import write_json
from .simulate import Trajectory, WindingVector
from . import __version__


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """Converged rotating-wave orbit.

    nodes are the m multiple-shooting states (nodes[0] is the anchor);
    multipliers always contain the trivial unit multiplier; stable means
    all nontrivial multipliers lie strictly inside the unit circle.
    """

    anchor: np.ndarray
    period: float
    winding: WindingVector
    nodes: np.ndarray
    multipliers: np.ndarray
    stable: bool
    residual: float

    @property
    def m(self) -> int:
        return self.nodes.shape[0]


def nontrivial_multipliers(multipliers: np.ndarray) -> np.ndarray:
    """Drop the multiplier closest to 1 (the trivial one of autonomous flow)."""
    multipliers = np.asarray(multipliers, dtype=complex)
    keep = np.ones(multipliers.size, dtype=bool)
    keep[int(np.argmin(np.abs(multipliers - 1.0)))] = False
    return multipliers[keep]


def _shooting_residual(nodes: np.ndarray, T: float, w: np.ndarray,
                       flow: Flow, phase_row: np.ndarray, phase_val: float,
                       with_jacobian: bool):
    """Residual (and Jacobian) of the multiple shooting system.

    Unknowns: m node states plus the period.  Equations: m segment
    matching conditions (the last one closes the loop up to 2 pi w) and
    one scalar phase condition <phase_row, x0> = phase_val.
    """
    m, n = nodes.shape
    tau = T / m
    dim = m * n + 1
    R = np.empty(dim)
    J = np.empty((dim, dim)) if with_jacobian else None
    if with_jacobian:
        J.fill(0.0)
    ends = np.empty((m, n))
    for j in range(m):
        if with_jacobian:
            end, M = flow.advance_with_jacobian(nodes[j], tau)
        else:
            end = flow.advance(nodes[j], tau)
            M = None
        ends[j] = end
        nxt = (j + 1) % m
        offset = w * 2.0 * np.pi if j == m - 1 else 0.0
        R[j * n:(j + 1) * n] = end - nodes[nxt] - offset
        if with_jacobian:
            rows = slice(j * n, (j + 1) * n)
            J[rows, j * n:(j + 1) * n] = M
            for i in range(n):
                J[j * n + i, nxt * n + i] -= 1.0
            J[rows, -1] = flow.field(end) / m
    R[-1] = float(phase_row @ nodes[0]) - phase_val
    if with_jacobian:
        J[-1, :n] = phase_row
    return (R, J, ends) if with_jacobian else (R, None, ends)


def find_orbit(guess: tuple[np.ndarray, float], w: WindingVector,
               p: Parameters, m: int = 4,
               opts: IntegratorOptions | None = None,
               tol: float = 1e-9, max_iter: int = 30) -> PeriodicOrbit:
    """Solve the multiple-shooting system from an (x0, T) guess.

    The phase condition anchors the fastest component of the guess to its
    guess value; if Newton stalls on that, the orthogonal (integral-type)
    phase condition is tried instead.
    """
    # wrap the anchor into the base cell: the field is 2pi-periodic per
    # component, and small coordinates keep relative error from swamping
    # the residual tolerance
    x0 = np.mod(np.asarray(guess[0], dtype=float), 2.0 * np.pi)
    T0 = float(guess[1])
    if T0 <= 0.0:
        raise ValueError("period guess must be positive")
    if w.is_zero:
        raise ValueError("winding vector must be nonzero")
    if opts is None:
        # segment flows must be resolved well below the shooting tolerance
        opts = IntegratorOptions(abs_tol=min(1e-12, tol * 1e-3),
                                 rel_tol=min(1e-12, tol * 1e-3))
    flow = Flow(p, opts)
    f0 = flow.field(x0)
    speed = np.abs(f0)
    if float(np.max(speed)) < 1e-8:
        raise DegeneratePhaseCondition(
            f"field at the guess has max speed {float(np.max(speed)):.3e}")
    j0 = int(np.argmax(speed))
    anchor_row = np.zeros(p.N)
    anchor_row[j0] = 1.0
    conditions = [(anchor_row, float(x0[j0])),
                  (f0 / np.linalg.norm(f0), float(f0 @ x0)
                   / float(np.linalg.norm(f0)))]
    last_error: Exception | None = None
    for phase_row, phase_val in conditions:
        try:
            return _solve_shooting(x0, T0, w, p, flow, m, phase_row,
                                   phase_val, tol, max_iter)
        except (NoConvergence, ValueError) as exc:
            last_error = exc
    raise NoConvergence(
        f"shooting failed with both phase conditions: {last_error}")


def _seed_nodes(x0: np.ndarray, T: float, m: int, flow: Flow) -> np.ndarray:
    nodes = np.empty((m, x0.size))
    nodes[0] = x0
    for j in range(1, m):
        nodes[j] = flow.advance(nodes[j - 1], T / m)
    return nodes


def _solve_shooting(x0: np.ndarray, T0: float, w: WindingVector,
                    p: Parameters, flow: Flow, m: int,
                    phase_row: np.ndarray, phase_val: float,
                    tol: float, max_iter: int) -> PeriodicOrbit:
    n = p.N
    nodes = _seed_nodes(x0, T0, m, flow)
    T = T0
    # the guess sets the period scale; an iterate that leaves this window
    # is diverging, and every residual evaluation costs time proportional
    # to T, so cut such solves off instead of integrating ever longer arcs
    T_lo, T_hi = 0.25 * T0, 4.0 * T0
    w_arr = w.array
    stalls = 0
    for _ in range(max_iter):
        R, J, _ = _shooting_residual(nodes, T, w_arr, flow, phase_row,
                                     phase_val, with_jacobian=True)
        r_norm = float(np.max(np.abs(R)))
        if r_norm <= tol:
            break
        step = solve_linear(J, -R)
        lam = 1.0
        improved = False
        while lam >= 0.125:
            nodes_new = nodes + lam * step[:m * n].reshape(m, n)
            T_new = T + lam * step[-1]
            if T_lo <= T_new <= T_hi:
                R_new, _, _ = _shooting_residual(
                    nodes_new, T_new, w_arr, flow, phase_row, phase_val,
                    with_jacobian=False)
                if (np.all(np.isfinite(R_new))
                        and float(np.max(np.abs(R_new))) < r_norm):
                    nodes, T = nodes_new, T_new
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            stalls += 1
            if stalls >= 2:
                raise NoConvergence(
                    f"shooting stalled at residual {r_norm:.3e}")
            # take the undamped step once; Newton sometimes needs to climb
            nodes = nodes + step[:m * n].reshape(m, n)
            T = T + step[-1]
            if not (T_lo <= T <= T_hi):
                raise NoConvergence(
                    f"period iterate {T:.3e} left trust window "
                    f"[{T_lo:.3e}, {T_hi:.3e}]")
        else:
            stalls = 0
    R, _, _ = _shooting_residual(nodes, T, w_arr, flow, phase_row,
                                 phase_val, with_jacobian=False)
    residual = float(np.max(np.abs(R)))
    if residual > tol:
        raise NoConvergence(
            f"shooting residual {residual:.3e} above {tol:.1e} after "
            f"{max_iter} iterations")
    M = _monodromy_product(nodes, T, flow)
    mult = eigenvalues(M)
    stable = bool(np.all(np.abs(nontrivial_multipliers(mult)) < 1.0))
    return PeriodicOrbit(anchor=nodes[0].copy(), period=float(T), winding=w,
                         nodes=nodes, multipliers=mult, stable=stable,
                         residual=residual)


def _monodromy_product(nodes: np.ndarray, T: float, flow: Flow) -> np.ndarray:
    m, n = nodes.shape
    M = np.eye(n)
    for j in range(m):
        _, Mj = flow.advance_with_jacobian(nodes[j], T / m)
        M = Mj @ M
    return M


_TIGHT = IntegratorOptions(abs_tol=1e-12, rel_tol=1e-12)


def floquet(orbit: PeriodicOrbit, p: Parameters,
            opts: IntegratorOptions | None = None) -> np.ndarray:
    """Floquet multipliers recomputed from the stored shooting nodes."""
    flow = Flow(p, opts or _TIGHT)
    return eigenvalues(_monodromy_product(orbit.nodes, orbit.period, flow))


def classify_bifurcation(before: np.ndarray, after: np.ndarray) -> str:
    """Classify what happened between two adjacent multiplier sets.

    Returns one of none, fold, period_doubling, torus; raises
    AmbiguousBifurcation when more than one crossing type fires (the
    caller should refine its step).
    """
    nb = nontrivial_multipliers(before)
    na = nontrivial_multipliers(after)

    def real_product(vals: np.ndarray, shift: float) -> float:
        return float(np.real(np.prod(vals + shift)))

    crossings = []
    if real_product(nb, -1.0) * real_product(na, -1.0) < 0.0:
        crossings.append("fold")
    if real_product(nb, 1.0) * real_product(na, 1.0) < 0.0:
        crossings.append("period_doubling")

    def pair_excess(vals: np.ndarray) -> float | None:
        pairs = vals[np.abs(vals.imag) > 1e-9]
        if pairs.size == 0:
            return None
        return float(np.max(np.abs(pairs)) - 1.0)

    eb, ea = pair_excess(nb), pair_excess(na)
    if eb is not None and ea is not None and eb * ea < 0.0:
        crossings.append("torus")
    if len(crossings) > 1:
        raise AmbiguousBifurcation(
            f"multiple crossings in one step: {crossings}")
    return crossings[0] if crossings else "none"


def double_period_seed(orbit: PeriodicOrbit, p: Parameters,
                       opts: IntegratorOptions | None = None,
                       amplitude: float = 1e-3,
                       ) -> tuple[tuple[np.ndarray, float], WindingVector]:
    """Guess for the doubled orbit near a period-doubling event.

    Perturbs the anchor along the eigenvector of the multiplier nearest
    -1 and doubles period and winding.
    """
    flow = Flow(p, opts or _TIGHT)
    M = _monodromy_product(orbit.nodes, orbit.period, flow)
    vals, vecs = np.linalg.eig(M)
    i = int(np.argmin(np.abs(vals + 1.0)))
    if abs(vals[i] + 1.0) > 0.1:
        raise NoDoublingDirection(
            f"closest multiplier to -1 is {vals[i]:.4f}")
    v = np.real(vecs[:, i])
    v = v / np.linalg.norm(v)
    x0 = orbit.anchor + amplitude * v
    return (x0, 2.0 * orbit.period), 2 * orbit.winding


@dataclass(frozen=True)
class SaddleSpectrum:
    """Spectrum shape of a saddle with a one-dimensional unstable manifold.

    mu_plus is the unstable rate; decay_rates holds the stable rates
    |Re lambda| ascending (one entry per real eigenvalue, or the shared
    rate of the complex pair in the focus case); shilnikov is the
    saddle-focus cascade condition mu_- < mu_+ < 2 mu_-.
    """

    mu_plus: float
    kind: str
    decay_rates: tuple[float, ...]
    omega_minus: float | None
    shilnikov: bool

    @property
    def mu_minus(self) -> float:
        return self.decay_rates[0]


def saddle_spectrum_classify(eq: Equilibrium) -> SaddleSpectrum:
    """Classify a nu_u = 1 saddle as real or saddle-focus."""
    spec = np.asarray(eq.spectrum, dtype=complex)
    tol = 1e-9 * (1.0 + float(np.max(np.abs(spec))))
    unstable = spec[spec.real > 0.0]
    stable = spec[spec.real < 0.0]
    if unstable.size != 1 or stable.size != spec.size - 1:
        raise NotSaddleFocusOrReal(
            f"need exactly one unstable eigenvalue, spectrum {spec}")
    if abs(unstable[0].imag) > tol:
        raise NotSaddleFocusOrReal(
            f"unstable eigenvalue {unstable[0]} is not real")
    mu_plus = float(unstable[0].real)
    if np.all(np.abs(stable.imag) <= tol):
        rates = tuple(sorted(float(-v.real) for v in stable))
        return SaddleSpectrum(mu_plus=mu_plus, kind="real",
                              decay_rates=rates, omega_minus=None,
                              shilnikov=False)
    pairs = stable[stable.imag > tol]
    if pairs.size == 1 and stable.size == 2:
        mu_minus = float(-pairs[0].real)
        omega = float(pairs[0].imag)
        return SaddleSpectrum(mu_plus=mu_plus, kind="focus",
                              decay_rates=(mu_minus,), omega_minus=omega,
                              shilnikov=mu_minus < mu_plus < 2.0 * mu_minus)
    raise NotSaddleFocusOrReal(
        f"stable part is neither all-real nor a single complex pair: {spec}")


def guess_from_simulation(traj: Trajectory, p: Parameters, t_settle: float,
                          ) -> tuple[np.ndarray, float, WindingVector]:
    """Harvest an (x0, T, w) orbit guess from a phase-slipping trajectory.

    Takes the state at t_settle as anchor and finds the next return of
    the dominant slipping component to its level shifted by 2 pi.
    """
    x_a = traj.state_at(t_settle)
    slip_window = min(50.0, t_settle)
    slip = x_a - traj.state_at(t_settle - slip_window)
    j0 = int(np.argmax(np.abs(slip)))
    if abs(slip[j0]) <= 2.0 * np.pi:
        raise NoConvergence(
            "trajectory is not slipping; no rotating-wave guess available")
    level = x_a[j0] + np.copysign(2.0 * np.pi, slip[j0])
    mask = traj.times > t_settle
    times = traj.times[mask]
    comp = traj.states[mask, j0]
    crossed = np.nonzero((comp[:-1] - level) * (comp[1:] - level) <= 0.0)[0]
    if crossed.size == 0:
        raise NoConvergence(
            "no return of the slipping component within the trajectory")
    i = int(crossed[0])
    frac = (level - comp[i]) / (comp[i + 1] - comp[i])
    t_cross = float(times[i] + frac * (times[i + 1] - times[i]))
    x_cross = traj.state_at(t_cross)
    w = np.round((x_cross - x_a) / (2.0 * np.pi)).astype(int)
    return x_a, t_cross - t_settle, WindingVector(tuple(w))


def renode(orbit: PeriodicOrbit, p: Parameters, m: int,
           opts: IntegratorOptions | None = None) -> PeriodicOrbit:
    """Resample an orbit onto m shooting nodes (anchor unchanged)."""
    flow = Flow(p, opts or _TIGHT)
    nodes = _seed_nodes(orbit.anchor, orbit.period, m, flow)
    return replace(orbit, nodes=nodes)


def export_orbit_json(orbit: PeriodicOrbit, p: Parameters,
                      path: str | Path, metadata: dict | None = None) -> None:
    payload = {
        "N": p.N,
        "k": p.k,
        "delta": p.delta,
        "winding": list(orbit.winding.w),
        "period": orbit.period,
        "anchor": [float(v) for v in orbit.anchor],
        "multipliers": [{"re": float(mu.real), "im": float(mu.imag)}
                        for mu in orbit.multipliers],
        "stable": orbit.stable,
        "metadata": metadata or {"version": __version__},
    }
    write_json(path, payload)


def orbit_from_json(payload: dict) -> tuple[PeriodicOrbit, dict]:
    """Rebuild (orbit, model fields) from an exported record; nodes are
    reduced to the anchor."""
    mult = sort_spectrum(np.array([complex(d["re"], d["im"])
                                   for d in payload["multipliers"]]))
    anchor = np.array(payload["anchor"], dtype=float)
    orbit = PeriodicOrbit(
        anchor=anchor, period=float(payload["period"]),
        winding=WindingVector(tuple(payload["winding"])),
        nodes=anchor[None, :].copy(), multipliers=mult,
        stable=bool(payload["stable"]), residual=float("nan"))
    fields = {"N": payload["N"], "k": payload["k"], "delta": payload["delta"]}
    return orbit, fields
