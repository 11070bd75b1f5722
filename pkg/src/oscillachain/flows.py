"""Time-advance maps of the reduced flow, with variational derivatives.

Flow picks the compiled sine-coupling kernels when the parameters use the
sine coupling function, and the generic adaptive integrator otherwise.
Both produce the same Dormand-Prince 5(4) solution up to rounding; the
tests cross-validate them.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import StepSizeUnderflow
from .model import Parameters, jacobian, vector_field
from .numerics import IntegratorOptions, integrate_ode


class Flow:
    """Advance states of the reduced system by given durations."""

    def __init__(self, p: Parameters,
                 opts: IntegratorOptions | None = None) -> None:
        self.p = p
        self.opts = opts or IntegratorOptions()
        self.fast = p.gamma.kind == "sine"
        self._omega = np.ascontiguousarray(p.omega, dtype=float)
        self._max_step = (1e18 if math.isinf(self.opts.max_step)
                          else self.opts.max_step)

    def field(self, x: np.ndarray) -> np.ndarray:
        return vector_field(x, self.p)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return jacobian(x, self.p)

    def advance(self, x: np.ndarray, t: float) -> np.ndarray:
        """State reached from x after time t (t may be negative)."""
        if t == 0.0:
            return np.array(x, dtype=float)
        if self.fast:
            y = np.array(x, dtype=float)
            status, t_reached, _ = _kernels.advance(
                y, self.p.N, self.p.k, self._omega, 0.0, float(t),
                self.opts.rel_tol, self.opts.abs_tol, self._max_step,
                -1.0, False, y, -1.0)
            if status == _kernels.UNDERFLOW:
                raise StepSizeUnderflow(
                    f"compiled integrator underflowed at t={t_reached:.6g}")
            return y
        run = integrate_ode(lambda _, xx: vector_field(xx, self.p),
                            np.asarray(x, float), (0.0, float(t)),
                            self._plain_opts())
        return run.y[-1]

    def advance_with_jacobian(self, x: np.ndarray,
                              t: float) -> tuple[np.ndarray, np.ndarray]:
        """State after time t together with the flow-map derivative."""
        n = self.p.N
        if t == 0.0:
            return np.array(x, dtype=float), np.eye(n)
        if self.fast:
            z = np.concatenate([np.asarray(x, float), np.eye(n).ravel()])
            status, t_reached, _ = _kernels.advance(
                z, n, self.p.k, self._omega, 0.0, float(t),
                self.opts.rel_tol, self.opts.abs_tol, self._max_step,
                -1.0, True, z, -1.0)
            if status == _kernels.UNDERFLOW:
                raise StepSizeUnderflow(
                    f"compiled integrator underflowed at t={t_reached:.6g}")
            return z[:n], z[n:].reshape(n, n)

        def augmented(_: float, z: np.ndarray) -> np.ndarray:
            xx = z[:n]
            V = z[n:].reshape(n, n)
            return np.concatenate([vector_field(xx, self.p),
                                   (jacobian(xx, self.p) @ V).ravel()])

        z0 = np.concatenate([np.asarray(x, float), np.eye(n).ravel()])
        run = integrate_ode(augmented, z0, (0.0, float(t)),
                            self._plain_opts())
        z = run.y[-1]
        return z[:n], z[n:].reshape(n, n)

    def sample(self, x: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
        """States at the given times; t_grid[0] is the time of x."""
        t_grid = np.asarray(t_grid, dtype=float)
        if t_grid.ndim != 1 or t_grid.size < 1:
            raise ValueError("t_grid must be a nonempty 1-d array")
        out = np.empty((t_grid.size, self.p.N))
        if self.fast:
            y = np.array(x, dtype=float)
            status = _kernels.sample(y, self.p.N, self.p.k, self._omega,
                                     t_grid, self.opts.rel_tol,
                                     self.opts.abs_tol, self._max_step, out)
            if status == _kernels.UNDERFLOW:
                raise StepSizeUnderflow("compiled integrator underflowed "
                                        "while sampling")
            return out
        state = np.asarray(x, dtype=float)
        out[0] = state
        for j in range(1, t_grid.size):
            state = self.advance(state, t_grid[j] - t_grid[j - 1])
            out[j] = state
        return out

    def _plain_opts(self) -> IntegratorOptions:
        return IntegratorOptions(abs_tol=self.opts.abs_tol,
                                 rel_tol=self.opts.rel_tol,
                                 max_step=self.opts.max_step,
                                 dense_output=False)


def warmup() -> None:
    """Force JIT compilation of the kernels (first call in a fresh cache
    takes seconds; afterwards they load from disk)."""
    p = Parameters.travelling_wave(2, 0.5, 1.0)
    flow = Flow(p)
    flow.advance(np.array([0.1, 0.2]), 0.5)
    flow.advance_with_jacobian(np.array([0.1, 0.2]), 0.5)
    flow.sample(np.array([0.1, 0.2]), np.array([0.0, 0.5]))
    states = np.array([[0.1, 0.2]])
    _kernels.basin_chunk(states, np.array([-0.5]),
                         np.array([[-0.5 * math.sin(1.0), math.sin(1.0)]]),
                         np.array([1.0]), np.array([True]), 0.0, 1.0, 0.2,
                         1e-9, 1e-9, np.array([-1.0]), np.array([False]))
