"""Shared numerical kernels: linear solves, eigenvalues, Newton, ODE integration.

The integrator is an embedded Dormand-Prince 5(4) pair with PI step-size
control and a quartic dense-output interpolant, so one adaptive pass gives
both endpoint states and continuous trajectories.  The variational flow for
monodromy matrices rides along as an augmented system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import NoConvergence, SingularMatrix, StepSizeUnderflow

Field = Callable[[float, np.ndarray], np.ndarray]

# Dormand-Prince 5(4) tableau.  Row 7 of A equals the 5th-order weights B,
# so the last stage is the first stage of the next step (FSAL).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# 5th-order weights minus the embedded 4th-order ones; contracting the
# stages with this vector estimates the local error.
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])
# Dense-output matrix: stages contracted with P give quartic coefficients
# in the normalized step variable.
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_BETA = 0.04           # PI controller memory weight
_ALPHA = 0.2 - 0.75 * _BETA


@dataclass(frozen=True)
class IntegratorOptions:
    """Tolerances and step limits for integrate_ode and everything above it."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_step: float = math.inf
    dense_output: bool = False
    first_step: float | None = None

    def __post_init__(self) -> None:
        if self.abs_tol <= 0.0 or self.rel_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_step <= 0.0:
            raise ValueError("max_step must be positive")
        if self.first_step is not None and self.first_step <= 0.0:
            raise ValueError("first_step must be positive")


class DenseOutput:
    """Piecewise-quartic interpolant assembled from accepted integrator steps."""

    def __init__(self, ts: np.ndarray, ys: np.ndarray, qs: np.ndarray) -> None:
        self.ts = ts            # breakpoints, len nseg + 1, monotone
        self.ys = ys            # states at breakpoints, (nseg + 1, n)
        self.qs = qs            # quartic coefficients, (nseg, n, 4)
        self._dir = 1.0 if ts[-1] >= ts[0] else -1.0

    @property
    def t_min(self) -> float:
        return min(self.ts[0], self.ts[-1])

    @property
    def t_max(self) -> float:
        return max(self.ts[0], self.ts[-1])

    def _segment(self, t: float) -> int:
        ts = self.ts * self._dir
        i = int(np.searchsorted(ts, t * self._dir, side="right")) - 1
        return min(max(i, 0), len(self.ts) - 2)

    def _eval_one(self, t: float) -> np.ndarray:
        slack = 1e-9 * (1.0 + self.t_max - self.t_min)
        if t < self.t_min - slack or t > self.t_max + slack:
            raise ValueError(f"t={t} outside interpolation span "
                             f"[{self.t_min}, {self.t_max}]")
        i = self._segment(t)
        h = self.ts[i + 1] - self.ts[i]
        x = (t - self.ts[i]) / h
        powers = np.array([x, x * x, x ** 3, x ** 4])
        return self.ys[i] + h * (self.qs[i] @ powers)

    def __call__(self, t: float | Sequence[float]) -> np.ndarray:
        arr = np.asarray(t, dtype=float)
        if arr.ndim == 0:
            return self._eval_one(float(arr))
        return np.array([self._eval_one(float(v)) for v in arr])


@dataclass
class IntegrationResult:
    """Accepted steps of one integrate_ode run."""

    t: np.ndarray
    y: np.ndarray
    dense: DenseOutput | None
    n_steps: int
    n_rejected: int


def _error_norm(err_vec: np.ndarray, scale: np.ndarray) -> float:
    return float(np.sqrt(np.mean((err_vec / scale) ** 2)))


def _initial_step(f: Field, t0: float, y0: np.ndarray, f0: np.ndarray,
                  direction: float, abs_tol: float, rel_tol: float) -> float:
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = _error_norm(y0, scale)
    d1 = _error_norm(f0, scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = np.asarray(f(t0 + h0 * direction, y1), dtype=float)
    d2 = _error_norm(f1 - f0, scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1)


def integrate_ode(f: Field, x0: Sequence[float], t_span: tuple[float, float],
                  opts: IntegratorOptions | None = None) -> IntegrationResult:
    """Integrate dx/dt = f(t, x) over t_span with adaptive DP5(4) steps.

    t_span may run backward.  Raises StepSizeUnderflow when error control
    forces the step below the resolution of the time variable.
    """
    if opts is None:
        opts = IntegratorOptions()
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(x0, dtype=float).copy()
    if y.ndim != 1:
        raise ValueError("x0 must be one-dimensional")
    n = y.size

    ts = [t0]
    ys = [y.copy()]
    q_blocks: list[np.ndarray] = []

    if t1 == t0:
        dense = None
        if opts.dense_output:
            # degenerate span: constant interpolant over a zero-length segment
            dense = DenseOutput(np.array([t0, t0 + 1.0]),
                                np.vstack([y, y]),
                                np.zeros((1, n, 4)))
        return IntegrationResult(np.array(ts), np.array(ys), dense, 0, 0)

    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)
    f0 = np.asarray(f(t0, y), dtype=float)
    if opts.first_step is not None:
        h_abs = float(opts.first_step)
    else:
        h_abs = _initial_step(f, t0, y, f0, direction, opts.abs_tol, opts.rel_tol)
    h_abs = min(h_abs, opts.max_step, span)

    t = t0
    K = np.empty((7, n))
    K[0] = f0
    fac_old = 1e-4
    rejected_last = False
    n_steps = 0
    n_rejected = 0

    while (t1 - t) * direction > 0.0:
        tiny = 16.0 * np.finfo(float).eps * max(abs(t), abs(t1), 1.0)
        if h_abs < tiny:
            raise StepSizeUnderflow(
                f"step {h_abs:.3e} below resolution at t={t:.6g}")
        h = direction * min(h_abs, abs(t1 - t))

        for i in range(1, 6):
            yi = y + h * (K[:i].T @ _A[i, :i])
            K[i] = f(t + _C[i] * h, yi)
        y_new = y + h * (K[:6].T @ _B)
        K[6] = f(t + h, y_new)

        err_vec = h * (K.T @ _E)
        scale = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _error_norm(err_vec, scale)
        if not math.isfinite(err):
            err = 10.0  # force rejection and shrink past the bad region

        if err <= 1.0:
            if opts.dense_output:
                q_blocks.append(K.T @ _P)
            t = t + h
            y = y_new
            K[0] = K[6]
            ts.append(t)
            ys.append(y.copy())
            n_steps += 1
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** (-_ALPHA) * fac_old ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            if rejected_last:
                factor = min(1.0, factor)
            h_abs = min(abs(h) * factor, opts.max_step)
            fac_old = max(err, 1e-4)
            rejected_last = False
        else:
            h_abs = abs(h) * max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            n_rejected += 1
            rejected_last = True

    t_arr = np.array(ts)
    y_arr = np.array(ys)
    dense = None
    if opts.dense_output:
        dense = DenseOutput(t_arr, y_arr, np.array(q_blocks))
    return IntegrationResult(t_arr, y_arr, dense, n_steps, n_rejected)


def monodromy(f: Field, df: Callable[[float, np.ndarray], np.ndarray],
              orbit_start: Sequence[float], T: float,
              opts: IntegratorOptions | None = None) -> np.ndarray:
    """Derivative of the time-T flow map at orbit_start.

    Integrates the variational system dV/dt = df(t, x) V, V(0) = I alongside
    the base flow and returns V(T).
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    x0 = np.array(orbit_start, dtype=float)
    n = x0.size

    def augmented(t: float, z: np.ndarray) -> np.ndarray:
        x = z[:n]
        V = z[n:].reshape(n, n)
        dx = np.asarray(f(t, x), dtype=float)
        dV = np.asarray(df(t, x), dtype=float) @ V
        return np.concatenate([dx, dV.ravel()])

    z0 = np.concatenate([x0, np.eye(n).ravel()])
    if opts is None:
        opts = IntegratorOptions()
    run = IntegratorOptions(abs_tol=opts.abs_tol, rel_tol=opts.rel_tol,
                            max_step=opts.max_step, dense_output=False,
                            first_step=opts.first_step)
    result = integrate_ode(augmented, z0, (0.0, float(T)), run)
    return result.y[-1, n:].reshape(n, n)


def solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b by LU with partial pivoting.

    Rejects pivots at or below 1e-12 in magnitude, which is the shared
    near-singularity threshold across the package.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
        raise ValueError("non-finite entries in linear system")
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 1e-12:
        raise SingularMatrix(
            f"pivot {pivots.min():.3e} at or below 1e-12 for {A.shape[0]}x"
            f"{A.shape[1]} system")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def sort_spectrum(values: np.ndarray) -> np.ndarray:
    """Canonical ordering: ascending real part, then ascending imaginary."""
    values = np.asarray(values, dtype=complex)
    order = np.lexsort((values.imag, values.real))
    return values[order]


def eigenvalues(A: np.ndarray) -> np.ndarray:
    """Eigenvalues of a small dense matrix, canonically sorted.

    Backed by LAPACK's Hessenberg reduction plus shifted QR iteration.
    Real input yields exact conjugate pairs.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got shape {A.shape}")
    if A.shape[0] > 64:
        raise ValueError("eigenvalue routine is limited to n <= 64")
    if not np.all(np.isfinite(A)):
        raise ValueError("non-finite entries in matrix")
    try:
        vals = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"QR iteration failed: {exc}") from exc
    return sort_spectrum(vals)


def spectrum_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest worst-case pairing distance between two eigenvalue multisets."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size != b.size:
        raise ValueError("spectra must have equal cardinality")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def newton(F: Callable[[np.ndarray], np.ndarray],
           x0: Sequence[float] | float,
           jac: Callable[[np.ndarray], np.ndarray] | None = None,
           tol: float = 1e-10,
           max_iter: int = 50) -> np.ndarray | float:
    """Damped Newton iteration on F(x) = 0 in the max norm.

    jac=None falls back to central finite differences.  Scalar x0 yields a
    scalar root.
    """
    scalar = np.isscalar(x0)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()

    def F_vec(z: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(F(z[0] if scalar else z), dtype=float))

    def jac_fd(z: np.ndarray) -> np.ndarray:
        m = z.size
        J = np.empty((m, m))
        for i in range(m):
            step = 1e-7 * max(1.0, abs(z[i]))
            zp, zm = z.copy(), z.copy()
            zp[i] += step
            zm[i] -= step
            J[:, i] = (F_vec(zp) - F_vec(zm)) / (2.0 * step)
        return J

    def jac_vec(z: np.ndarray) -> np.ndarray:
        if jac is None:
            return jac_fd(z)
        return np.atleast_2d(np.asarray(jac(z[0] if scalar else z), dtype=float))

    r = F_vec(x)
    for _ in range(max_iter):
        r_norm = float(np.max(np.abs(r)))
        if r_norm <= tol:
            return float(x[0]) if scalar else x
        step = solve_linear(jac_vec(x), -r)
        lam = 1.0
        x_new, r_new = x + step, F_vec(x + step)
        while (np.max(np.abs(r_new)) >= r_norm and lam > 1.0 / 16.0
               and np.all(np.isfinite(r_new))):
            lam *= 0.5
            x_new = x + lam * step
            r_new = F_vec(x_new)
        if not np.all(np.isfinite(r_new)):
            raise NoConvergence("residual became non-finite during damping")
        x, r = x_new, r_new
    if float(np.max(np.abs(r))) <= tol:
        return float(x[0]) if scalar else x
    raise NoConvergence(
        f"Newton stalled at residual {float(np.max(np.abs(r))):.3e} "
        f"after {max_iter} iterations (tol {tol:.1e})")
