"""Torus-aware simulation: winding numbers, trapping, manifold shooting.

States stay unwrapped on the real line throughout; anything that compares
positions does so through the componentwise torus distance, so winding
numbers remain recoverable from raw trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .equilibria import (Equilibrium, connection_generic,
                         enumerate_equilibria, lyapunov_E)
from .errors import NoConvergence, NotOneDimensional, SingularMatrix
from .flows import Flow
from .model import Parameters, jacobian, torus_gap, vector_field
from .numerics import DenseOutput, IntegratorOptions, integrate_ode, newton
from .serialize import write_csv


@dataclass(frozen=True)
class WindingVector:
    """Integer 2pi-multiples gained per component over a time window."""

    w: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "w", tuple(int(v) for v in self.w))

    def __add__(self, other: "WindingVector") -> "WindingVector":
        return WindingVector(tuple(a + b for a, b in zip(self.w, other.w)))

    def __mul__(self, factor: int) -> "WindingVector":
        return WindingVector(tuple(int(factor) * v for v in self.w))

    __rmul__ = __mul__

    @property
    def array(self) -> np.ndarray:
        return np.array(self.w, dtype=float)

    @property
    def is_zero(self) -> bool:
        return all(v == 0 for v in self.w)


class Rotation:
    """Marker target for trajectories that keep slipping phase."""

    def __repr__(self) -> str:
        return "Rotation"


ROTATION = Rotation()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of the reduced system, unwrapped."""

    times: np.ndarray
    states: np.ndarray
    dense: DenseOutput | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("states must be finite")

    def state_at(self, t: float) -> np.ndarray:
        """State at time t: dense interpolant if present, else linear
        interpolation between samples."""
        if self.dense is not None:
            return self.dense(t)
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"t={t} outside trajectory span")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2)
        frac = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return (1.0 - frac) * self.states[i] + frac * self.states[i + 1]


def simulate(x0: np.ndarray, p: Parameters, t_end: float,
             opts: IntegratorOptions | None = None,
             dt_sample: float = 0.25) -> Trajectory:
    """Integrate from x0 for t_end time units, sampled every dt_sample.

    The sine-coupling fast path returns samples only; other couplings also
    attach the dense interpolant.
    """
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    opts = opts or IntegratorOptions()
    n_samples = max(2, int(np.ceil(t_end / dt_sample)) + 1)
    grid = np.linspace(0.0, t_end, n_samples)
    flow = Flow(p, opts)
    if flow.fast:
        states = flow.sample(np.asarray(x0, float), grid)
        return Trajectory(times=grid, states=states)
    run_opts = IntegratorOptions(abs_tol=opts.abs_tol, rel_tol=opts.rel_tol,
                                 max_step=opts.max_step, dense_output=True)
    run = integrate_ode(lambda _, x: vector_field(x, p),
                        np.asarray(x0, float), (0.0, t_end), run_opts)
    states = run.dense(grid)
    return Trajectory(times=grid, states=states, dense=run.dense)


def detect_trapping(traj: Trajectory, target: np.ndarray,
                    radius: float) -> float | None:
    """First sample time with torus 2-norm distance to target <= radius."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    gaps = traj.states - np.asarray(target, float)[None, :]
    d = np.mod(np.abs(gaps), 2.0 * np.pi)
    d = np.minimum(d, 2.0 * np.pi - d)
    dist = np.sqrt(np.sum(d * d, axis=1))
    hits = np.nonzero(dist <= radius)[0]
    if hits.size == 0:
        return None
    return float(traj.times[hits[0]])


def winding_over(traj: Trajectory, t0: float,
                 t1: float) -> tuple[WindingVector, float]:
    """Winding numbers between two times, with the rounding defect.

    Returns (w, defect) where w_i = round((x_i(t1)-x_i(t0))/2pi) and
    defect = max_i |x_i(t1)-x_i(t0)-2pi w_i|.
    """
    if not (t0 < t1):
        raise ValueError("need t0 < t1")
    disp = traj.state_at(t1) - traj.state_at(t0)
    w = np.round(disp / (2.0 * np.pi)).astype(int)
    defect = float(np.max(np.abs(disp - 2.0 * np.pi * w)))
    return WindingVector(tuple(w)), defect


@dataclass(frozen=True, eq=False)
class ConnectionResult:
    """Outcome of one unstable-manifold branch.

    target is an Equilibrium (captured), ROTATION (still slipping at t_max
    with super-2pi displacement in the trailing window), or None
    (undetermined slow transient).  winding counts the 2pi-offsets of the
    landing copy relative to the target's base point, or the per-window
    slip for rotations.  generic is the dimension-count genericity flag
    when the target is an equilibrium with indices.
    """

    source: Equilibrium
    branch_sign: int
    target: Equilibrium | Rotation | None
    winding: WindingVector
    transit_time: float
    generic: bool | None


def _unstable_direction(eq: Equilibrium, p: Parameters) -> np.ndarray:
    vals, vecs = np.linalg.eig(jacobian(eq.point, p))
    i = int(np.argmax(vals.real))
    u = np.real(vecs[:, i])
    u = u / np.linalg.norm(u)
    lead = int(np.argmax(np.abs(u)))
    return u if u[lead] > 0.0 else -u


def shoot_unstable_manifold(eq: Equilibrium, p: Parameters,
                            offset: float = 1e-6, t_max: float = 500.0,
                            opts: IntegratorOptions | None = None,
                            capture_radius: float = 1e-3,
                            ) -> tuple[ConnectionResult, ConnectionResult]:
    """Follow both branches of a one-dimensional unstable manifold.

    Integrates from eq.point +- offset * u until captured inside
    capture_radius of some enumerated equilibrium (then Newton-confirmed)
    or t_max elapses.
    """
    if eq.indices is None or eq.indices.nu_u != 1:
        nu = None if eq.indices is None else eq.indices.nu_u
        raise NotOneDimensional(
            f"unstable manifold dimension is {nu}, need exactly 1")
    u = _unstable_direction(eq, p)
    targets = enumerate_equilibria(p)
    points = np.array([t.point for t in targets])
    source_idx = int(np.argmin([np.max(torus_gap(t.point, eq.point))
                                for t in targets]))
    flow = Flow(p, opts)
    chunk, dt = 25.0, 0.25
    window = 50.0
    escape_radius = max(0.05, 10.0 * capture_radius)

    results = []
    for sign in (1, -1):
        x = eq.point + sign * offset * u
        t_now = 0.0
        escaped = False
        captured: tuple[int, np.ndarray, float] | None = None
        tail: list[tuple[float, np.ndarray]] = [(0.0, x.copy())]
        while t_now < t_max and captured is None:
            t_step = min(chunk, t_max - t_now)
            grid = t_now + np.linspace(0.0, t_step,
                                       int(np.ceil(t_step / dt)) + 1)
            states = flow.sample(x, grid - t_now)
            gaps = np.mod(np.abs(states[:, None, :] - points[None, :, :]),
                          2.0 * np.pi)
            gaps = np.minimum(gaps, 2.0 * np.pi - gaps)
            dist = np.sqrt(np.sum(gaps * gaps, axis=2))
            for j in range(dist.shape[0]):
                if not escaped:
                    # the start sits on the source; captures begin only
                    # after the trajectory leaves its neighbourhood
                    if dist[j, source_idx] > escape_radius:
                        escaped = True
                    else:
                        continue
                if np.min(dist[j]) <= capture_radius:
                    captured = (int(np.argmin(dist[j])), states[j],
                                float(grid[j]))
                    break
            x = states[-1]
            t_now = float(grid[-1])
            tail.append((t_now, x.copy()))
            tail = [(tt, xx) for tt, xx in tail if tt >= t_now - window]

        if captured is not None:
            idx, x_cap, t_cap = captured
            target = targets[idx]
            w = np.round((x_cap - target.point) / (2.0 * np.pi)).astype(int)
            # polish the aligned state back onto the equilibrium to confirm
            aligned = x_cap - 2.0 * np.pi * w
            try:
                polished = newton(lambda z: vector_field(z, p), aligned,
                                  jac=lambda z: jacobian(z, p), tol=1e-10)
                confirmed = float(np.max(torus_gap(
                    polished, target.point))) <= 1e-6
            except (SingularMatrix, NoConvergence):
                confirmed = False
            generic = None
            if confirmed and target.indices is not None:
                generic = connection_generic(eq, target)
            results.append(ConnectionResult(
                source=eq, branch_sign=sign, target=target,
                winding=WindingVector(tuple(w)), transit_time=t_cap,
                generic=generic))
            continue

        # no capture: rotation verdict needs a super-2pi trailing slip
        t_ref, x_ref = tail[0]
        slip = x - x_ref
        w = np.round(slip / (2.0 * np.pi)).astype(int)
        if np.max(np.abs(slip)) > 2.0 * np.pi:
            target: Equilibrium | Rotation | None = ROTATION
        else:
            target = None
        results.append(ConnectionResult(
            source=eq, branch_sign=sign, target=target,
            winding=WindingVector(tuple(w)), transit_time=t_now,
            generic=None))
    return results[0], results[1]


def export_trajectory_csv(traj: Trajectory, p: Parameters,
                          path: str | Path) -> None:
    """Write t,x1..xN,E rows in the shared CSV dialect."""
    header = ["t"] + [f"x{i + 1}" for i in range(p.N)] + ["E"]
    rows = ([t] + list(state) + [lyapunov_E(state, p)]
            for t, state in zip(traj.times, traj.states))
    write_csv(path, header, rows)
