"""Pseudo-arclength continuation of rotating waves and region assembly.

A branch is a one-parameter family of rotating-wave orbits followed in
either the coupling ratio k or the detuning delta.  The corrector works
on the extended unknown vector [shooting nodes, period, parameter] with
a hyperplane constraint, so folds in the parameter are passed smoothly.
Fold, period-doubling and torus crossings are located by bisection on
multiplier indicator functions; branch ends of very large period passing
near a saddle are recorded as homoclinic proxies.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .equilibria import Equilibrium, enumerate_equilibria
from .errors import (NoConvergence, NoDoublingDirection, NoEquilibria,
                     NearSingularC, NotSaddleFocusOrReal, OscillaChainError)
from .flows import Flow
from .model import Parameters, torus_gap
from .numerics import IntegratorOptions, eigenvalues, solve_linear
from .orbits import (PeriodicOrbit, SaddleSpectrum, _monodromy_product,
                     _shooting_residual, double_period_seed, find_orbit,
                     guess_from_simulation, nontrivial_multipliers,
                     saddle_spectrum_classify)
from .serialize import fmt, write_csv
from .simulate import WindingVector, simulate

log = logging.getLogger(__name__)

# homoclinic proxy thresholds: a branch end is treated as a connection
# when the period exceeds PROXY_PERIOD while the orbit passes within
# PROXY_DISTANCE (torus 2-norm) of an enumerated equilibrium
PROXY_PERIOD = 200.0
PROXY_DISTANCE = 1e-2

STEP_MIN = 1e-5
STEP_MAX = 0.05
PARAM_TOL = 1e-6

# period cap per shooting segment before the orbit is re-noded
SEGMENT_CAP = 12.0
MAX_NODES = 40

# arclength metric weight on the period component: lets the step cover
# large period growth during a homoclinic approach while keeping full
# resolution in the parameter and the orbit shape
PERIOD_WEIGHT = 1e-4

# multiplier-based event detection is unreliable once the monodromy is
# dominated by exp(mu_plus T): spectral noise of the contracting pair
# reaches order one; events of interest all occur at moderate periods
EVENT_PERIOD_CAP = 120.0

# event intervals are skipped when the trivial multiplier is off by more
# than this (monodromy too ill-conditioned to trust indicator signs)
EVENT_DEFECT_CAP = 1e-6

_TIGHT = IntegratorOptions(abs_tol=1e-12, rel_tol=1e-12)

# continuation integrates long near-homoclinic periods whose closure
# error amplifies segment-flow error; keep it well under the Newton tol
_CONT_OPTS = IntegratorOptions(abs_tol=1e-13, rel_tol=1e-13)


@dataclass(frozen=True)
class BranchPoint:
    """One converged orbit on a branch at a parameter value."""

    param: float
    orbit: PeriodicOrbit


@dataclass(frozen=True)
class BranchEvent:
    """Codimension-one event located on a branch.

    kind is one of fold, period_doubling, torus, homoclinic_proxy; the
    orbit is the converged orbit at (or, for a proxy, nearest to) the
    event.  Homoclinic proxies carry the approached saddle's pattern and
    spectrum classification when it has a one-dimensional unstable
    manifold.
    """

    kind: str
    param: float
    orbit: PeriodicOrbit | None
    saddle_pattern: tuple[int, ...] | None = None
    saddle: SaddleSpectrum | None = None


@dataclass
class Branch:
    """Ordered family of rotating-wave orbits in one parameter.

    points run from the backward-direction end to the forward end; the
    parameter values need not be monotone (folds are passed).  statuses
    records how each direction terminated: range_end, homoclinic,
    step_underflow, period_blowup or max_points.
    """

    parameter: str
    fixed_other: float
    points: list[BranchPoint]
    events: list[BranchEvent]
    statuses: tuple[str, str]

    @property
    def params(self) -> np.ndarray:
        return np.array([pt.param for pt in self.points])

    def events_of(self, kind: str) -> list[BranchEvent]:
        return [e for e in self.events if e.kind == kind]


@dataclass(frozen=True)
class RegionEvent:
    """Boundary event of the rotating-wave region at one grid k."""

    k: float
    delta: float
    kind: str
    saddle_pattern: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RegionWindow:
    """Delta interval covered by the traced orbit family at one grid k."""

    k: float
    low: float
    high: float
    mirrored: bool

    @property
    def measure(self) -> float:
        """Total delta measure, counting the mirror interval when disjoint."""
        width = self.high - self.low
        return 2.0 * width if self.mirrored else width


@dataclass
class RegionBoundary:
    """Rotating-wave existence region assembled from per-k delta branches.

    lower/upper hold one extremal boundary event per nonempty grid k;
    all_events keeps every fold/homoclinic event found, windows the delta
    interval each traced branch covered, and empty_k the grid values
    where delta seeding found no rotating orbit.
    """

    grid: np.ndarray
    lower: list[RegionEvent] = field(default_factory=list)
    upper: list[RegionEvent] = field(default_factory=list)
    all_events: list[RegionEvent] = field(default_factory=list)
    empty_k: list[float] = field(default_factory=list)
    windows: list[RegionWindow] = field(default_factory=list)


def _param_of(p: Parameters, which: str) -> float:
    return p.delta if which == "delta" else p.k


def _with_param(p: Parameters, which: str, value: float) -> Parameters:
    return p.with_delta(value) if which == "delta" else p.with_k(value)


class _Corrector:
    """Newton corrector for the extended system [nodes, T, param].

    The residual stacks the multiple-shooting equations (including the
    anchor phase row) with one scalar constraint row supplied by the
    caller (arclength hyperplane or secant hyperplane).
    """

    def __init__(self, p: Parameters, which: str, w: WindingVector,
                 opts: IntegratorOptions, tol: float):
        self.p = p
        self.which = which
        self.w_arr = w.array
        self.w = w
        self.opts = opts
        self.tol = tol
        self._flows: dict[float, Flow] = {}

    def flow_at(self, value: float) -> Flow:
        fl = self._flows.get(value)
        if fl is None:
            fl = Flow(_with_param(self.p, self.which, value), self.opts)
            if len(self._flows) > 8:
                self._flows.clear()
            self._flows[value] = fl
        return fl

    def residual(self, u: np.ndarray, m: int, n: int,
                 phase_row: np.ndarray, phase_val: float,
                 with_jacobian: bool):
        nodes = u[:m * n].reshape(m, n)
        T, val = u[-2], u[-1]
        flow = self.flow_at(val)
        R, J, _ = _shooting_residual(nodes, T, self.w_arr, flow, phase_row,
                                     phase_val, with_jacobian)
        if not with_jacobian:
            return R, None
        # parameter column by forward differences on the shooting residual
        dp = 1e-6 * max(1.0, abs(val))
        flow_p = self.flow_at(val + dp)
        R_p, _, _ = _shooting_residual(nodes, T, self.w_arr, flow_p,
                                       phase_row, phase_val, False)
        J_ext = np.empty((R.size, u.size))
        J_ext[:, :-1] = J
        J_ext[:, -1] = (R_p - R) / dp
        return R, J_ext

    def correct(self, u0: np.ndarray, m: int, n: int,
                phase_row: np.ndarray, phase_val: float,
                constraint_row: np.ndarray, constraint_point: np.ndarray,
                max_iter: int = 8) -> tuple[np.ndarray, int]:
        """Solve {shooting residual = 0, row.(u - point) = 0} from u0."""
        u = u0.copy()
        for it in range(1, max_iter + 1):
            R, J = self.residual(u, m, n, phase_row, phase_val, True)
            c = float(constraint_row @ (u - constraint_point))
            r_norm = max(float(np.max(np.abs(R))), abs(c))
            if r_norm <= self.tol:
                return u, it
            A = np.vstack([J, constraint_row])
            rhs = -np.concatenate([R, [c]])
            step = solve_linear(A, rhs)
            if not np.all(np.isfinite(step)) or u[-2] + step[-2] <= 0.0:
                break
            u = u + step
        # accept a final iterate that meets tolerance after the last step
        R, _ = self.residual(u, m, n, phase_row, phase_val, False)
        c = float(constraint_row @ (u - constraint_point))
        if max(float(np.max(np.abs(R))), abs(c)) <= self.tol:
            return u, max_iter
        raise NoConvergence("corrector did not reach tolerance")

    def orbit_at(self, u: np.ndarray, m: int, n: int) -> PeriodicOrbit:
        nodes = u[:m * n].reshape(m, n).copy()
        T, val = float(u[-2]), float(u[-1])
        flow = self.flow_at(val)
        M = _monodromy_product(nodes, T, flow)
        mult = eigenvalues(M)
        stable = bool(np.all(np.abs(nontrivial_multipliers(mult)) < 1.0))
        R, _, _ = _shooting_residual(
            nodes, T, self.w_arr, flow, np.zeros(n), 0.0, False)
        residual = float(np.max(np.abs(R[:-1])))
        return PeriodicOrbit(anchor=np.mod(nodes[0], 2.0 * np.pi),
                             period=T, winding=self.w, nodes=nodes,
                             multipliers=mult, stable=stable,
                             residual=residual)


def _indicators(orbit: PeriodicOrbit) -> dict[str, float | None]:
    """Event indicator values; an event is a sign change between points."""
    mu = nontrivial_multipliers(orbit.multipliers)
    pairs = mu[np.abs(mu.imag) > 1e-9]
    return {
        "fold": float(np.real(np.prod(mu - 1.0))),
        "period_doubling": float(np.real(np.prod(mu + 1.0))),
        "torus": (float(np.max(np.abs(pairs)) - 1.0) if pairs.size else None),
    }


def _trivial_defect(orbit: PeriodicOrbit) -> float:
    mu = np.asarray(orbit.multipliers)
    return float(np.min(np.abs(mu - 1.0)))


def _event_is_genuine(kind: str, orbit: PeriodicOrbit,
                      slack: float = 0.05) -> bool:
    mu = nontrivial_multipliers(orbit.multipliers)
    if mu.size == 0:
        return False
    if kind == "fold":
        return bool(np.min(np.abs(mu - 1.0)) <= slack)
    if kind == "period_doubling":
        return bool(np.min(np.abs(mu + 1.0)) <= slack)
    pairs = mu[np.abs(mu.imag) > 1e-9]
    return bool(pairs.size and np.min(np.abs(np.abs(pairs) - 1.0)) <= slack)


def _rebase_nodes(u: np.ndarray, m: int, n: int) -> np.ndarray:
    """Shift all nodes by a common 2 pi integer vector so the anchor
    lands in [0, 2 pi)^n; the shooting system is invariant under this."""
    nodes = u[:m * n].reshape(m, n)
    shift = 2.0 * np.pi * np.floor(nodes[0] / (2.0 * np.pi))
    nodes -= shift[None, :]
    return u


def _phase_condition(flow: Flow, node0: np.ndarray) -> tuple[np.ndarray, float]:
    speed = np.abs(flow.field(node0))
    j0 = int(np.argmax(speed))
    row = np.zeros(node0.size)
    row[j0] = 1.0
    return row, float(node0[j0])


def _min_saddle_distance(orbit: PeriodicOrbit, p: Parameters,
                         flow: Flow) -> tuple[float, Equilibrium | None]:
    """Closest torus approach of the orbit to any enumerated equilibrium."""
    try:
        eqs = enumerate_equilibria(p)
    except (NoEquilibria, NearSingularC):
        return math.inf, None
    n_samples = max(200, 4 * orbit.m)
    t_grid = np.linspace(0.0, orbit.period, n_samples, endpoint=False)
    per_node = orbit.m
    samples = [orbit.nodes]
    seg = np.linspace(0.0, orbit.period / orbit.m,
                      max(2, n_samples // per_node), endpoint=False)[1:]
    for node in orbit.nodes:
        samples.append(flow.sample(node, seg))
    pts = np.vstack(samples)
    best, best_eq = math.inf, None
    for eq in eqs:
        gaps = torus_gap(pts, eq.point[None, :])
        d = float(np.min(np.linalg.norm(gaps, axis=1)))
        if d < best:
            best, best_eq = d, eq
    return best, best_eq


def _homoclinic_event(orbit: PeriodicOrbit, param: float, p: Parameters,
                      flow: Flow, proxy_period: float,
                      proxy_distance: float) -> BranchEvent | None:
    if orbit.period <= proxy_period:
        return None
    dist, eq = _min_saddle_distance(orbit, p, flow)
    if eq is None or dist >= proxy_distance:
        return None
    try:
        saddle = saddle_spectrum_classify(eq)
    except NotSaddleFocusOrReal:
        saddle = None
    return BranchEvent(kind="homoclinic_proxy", param=param, orbit=orbit,
                       saddle_pattern=eq.pattern, saddle=saddle)


class _DirectionRun:
    """Continuation from a seed in one orientation of the branch tangent."""

    def __init__(self, seed: PeriodicOrbit, p: Parameters, which: str,
                 rng: tuple[float, float], h0: float, direction: int,
                 tol: float, opts: IntegratorOptions, max_points: int,
                 proxy_period: float = PROXY_PERIOD,
                 proxy_distance: float = PROXY_DISTANCE,
                 event_kinds: tuple[str, ...] = ("fold", "period_doubling",
                                                 "torus")):
        self.p = p
        self.which = which
        self.lo, self.hi = min(rng), max(rng)
        self.direction = direction
        self.tol = tol
        self.opts = opts
        self.max_points = max_points
        self.proxy_period = proxy_period
        self.proxy_distance = proxy_distance
        self.event_kinds = event_kinds
        self.h = min(abs(h0), STEP_MAX)
        self.corr = _Corrector(p, which, seed.winding, opts, tol)
        self.n = seed.nodes.shape[1]
        self.m = seed.m
        self.u = np.concatenate([seed.nodes.ravel(),
                                 [seed.period, _param_of(p, which)]])
        _rebase_nodes(self.u, self.m, self.n)
        self.phase_row, self.phase_val = _phase_condition(
            self.corr.flow_at(self.u[-1]), self.u[:self.n])
        self.points: list[BranchPoint] = []
        self.events: list[BranchEvent] = []
        self.status = "max_points"
        self.prev_tangent: np.ndarray | None = None

    # -- linear algebra helpers -------------------------------------------

    def _metric(self) -> np.ndarray:
        d2 = np.ones(self.u.size)
        d2[-2] = PERIOD_WEIGHT
        return d2

    def _tangent(self) -> np.ndarray:
        _, J = self.corr.residual(self.u, self.m, self.n, self.phase_row,
                                  self.phase_val, True)
        d2 = self._metric()
        if self.prev_tangent is None:
            row = np.zeros(self.u.size)
            row[-1] = float(self.direction)
        else:
            row = d2 * self.prev_tangent
        A = np.vstack([J, row])
        rhs = np.zeros(self.u.size)
        rhs[-1] = 1.0
        t = solve_linear(A, rhs)
        t /= math.sqrt(float(t @ (d2 * t)))
        if self.prev_tangent is not None and \
                float(t @ (d2 * self.prev_tangent)) < 0:
            t = -t
        return t

    def _correct_on_hyperplane(self, guess: np.ndarray, row: np.ndarray,
                               point: np.ndarray) -> np.ndarray:
        return self.corr.correct(guess, self.m, self.n, self.phase_row,
                                 self.phase_val, row, point)[0]

    # -- event location ---------------------------------------------------

    def _bisect_event(self, kind: str, u_a: np.ndarray, t: np.ndarray,
                      h: float, s_a: float) -> None:
        """Bisect an indicator sign change along one accepted step.

        Interpolates along the predictor line of the step that exposed
        the sign change and corrects with the same arclength hyperplane
        family, so the intermediate solutions sweep the branch
        monotonically even through a fold in the parameter.
        """
        row = self._metric() * t
        lam_a, lam_b = 0.0, 1.0
        p_a, p_b = float(u_a[-1]), float(u_a[-1] + h * t[-1])
        log.debug("bisect %s over param [%.8f, %.8f]", kind, p_a, p_b)
        u_mid, orb = None, None
        for _ in range(80):
            # the multiplier can sweep fast where the branch is nearly
            # vertical in the parameter, so refine past the parameter
            # tolerance until the located multiplier sits on the circle
            if (abs(p_b - p_a) < PARAM_TOL and orb is not None
                    and _event_is_genuine(kind, orb)):
                break
            lam = 0.5 * (lam_a + lam_b)
            guess = u_a + (lam * h) * t
            try:
                u_mid = self._correct_on_hyperplane(guess, row, guess)
            except (NoConvergence, OscillaChainError):
                log.debug("bisect %s: corrector failed at lam=%.6f",
                          kind, lam)
                return
            orb = self.corr.orbit_at(u_mid, self.m, self.n)
            val = _indicators(orb)[kind]
            if val is None:
                log.debug("bisect %s: indicator vanished", kind)
                return
            if val * s_a < 0.0:
                lam_b, p_b = lam, float(u_mid[-1])
            else:
                lam_a, p_a = lam, float(u_mid[-1])
            if lam_b - lam_a < 1e-14:
                break
        if orb is None or u_mid is None:
            return
        if not _event_is_genuine(kind, orb):
            # an indicator product can flip from eigenvalue noise alone;
            # a true crossing leaves a multiplier at the unit circle
            log.debug("bisect %s: rejected at param=%.8f (multipliers %s)",
                      kind, u_mid[-1], np.round(orb.multipliers, 4))
            return
        log.debug("bisect %s: event at param=%.8f", kind, u_mid[-1])
        self.events.append(BranchEvent(kind=kind, param=float(u_mid[-1]),
                                       orbit=orb))

    def _check_events(self, prev: PeriodicOrbit, prev_u: np.ndarray,
                      new: PeriodicOrbit, t: np.ndarray, h: float) -> None:
        if max(prev.period, new.period) > EVENT_PERIOD_CAP:
            return
        if max(_trivial_defect(prev), _trivial_defect(new)) > EVENT_DEFECT_CAP:
            return
        a, b = _indicators(prev), _indicators(new)
        flips = [kind for kind in self.event_kinds
                 if a[kind] is not None and b[kind] is not None
                 and a[kind] * b[kind] < 0.0]
        for kind in flips:
            self._bisect_event(kind, prev_u, t, h, a[kind])

    # -- node maintenance ---------------------------------------------------

    def _roll_anchor(self) -> None:
        """Cycle the nodes so the anchor sits in the fastest region.

        Near a homoclinic approach most time-uniform nodes sink into the
        slow neighborhood of the saddle; anchoring the phase condition
        there degrades the corrector.  Rolling is a reparameterization of
        the same orbit (tail nodes gain one winding shift).
        """
        nodes = self.u[:self.m * self.n].reshape(self.m, self.n)
        flow = self.corr.flow_at(self.u[-1])
        speeds = [float(np.max(np.abs(flow.field(nd)))) for nd in nodes]
        j = int(np.argmax(speeds))
        if j == 0 or speeds[j] < 5.0 * speeds[0]:
            return
        shift = 2.0 * np.pi * self.corr.w_arr
        rolled = np.vstack([nodes[j:], nodes[:j] + shift])
        self.u[:self.m * self.n] = rolled.ravel()
        if self.prev_tangent is not None:
            tn = self.prev_tangent[:self.m * self.n].reshape(self.m, self.n)
            self.prev_tangent[:self.m * self.n] = np.vstack(
                [tn[j:], tn[:j]]).ravel()
        _rebase_nodes(self.u, self.m, self.n)

    def _maybe_renode(self) -> None:
        T = float(self.u[-2])
        if T / self.m <= SEGMENT_CAP or 2 * self.m > MAX_NODES:
            return
        # double the mesh by inserting each segment midpoint with a short
        # integration from its own node; reseeding from the anchor over the
        # whole period would amplify integration error by the leading
        # multiplier and throw the nodes off the orbit at large T
        flow = self.corr.flow_at(self.u[-1])
        nodes = self.u[:self.m * self.n].reshape(self.m, self.n)
        half = 0.5 * T / self.m
        doubled = np.empty((2 * self.m, self.n))
        doubled[0::2] = nodes
        for j in range(self.m):
            doubled[2 * j + 1] = flow.advance(nodes[j], half)
        old_tangent = self.prev_tangent
        self.u = np.concatenate([doubled.ravel(), self.u[-2:]])
        self.m *= 2
        # carry the travel direction across the renode: duplicate the node
        # blocks and keep (T, param); a bare parameter-direction restart
        # fails where the branch is vertical in the parameter
        if old_tangent is not None:
            carried = np.zeros(self.u.size)
            blocks = carried[:self.m * self.n].reshape(self.m, self.n)
            old_blocks = old_tangent[:-2].reshape(-1, self.n)
            blocks[0::2] = old_blocks
            blocks[1::2] = old_blocks
            carried[-2:] = old_tangent[-2:]
            self.prev_tangent = carried
        log.debug("renoded to m=%d at T=%.3f", self.m, T)

    # -- main loop ----------------------------------------------------------

    def run(self) -> None:
        flow = self.corr.flow_at(self.u[-1])
        orbit = self.corr.orbit_at(self.u, self.m, self.n)
        prev_orbit, prev_u = orbit, self.u.copy()
        for _ in range(self.max_points):
            try:
                t = self._tangent()
            except OscillaChainError:
                self.status = "step_underflow"
                return
            row = self._metric() * t
            advanced = False
            while self.h >= STEP_MIN:
                pred = self.u + self.h * t
                if pred[-1] < self.lo or pred[-1] > self.hi:
                    if self._finish_at_range_end(t):
                        return
                try:
                    u_new = self._correct_on_hyperplane(pred, row, pred)
                except (NoConvergence, OscillaChainError):
                    log.debug("correct failed at h=%.3g (d=%.8f T=%.3f m=%d)",
                              self.h, self.u[-1], self.u[-2], self.m)
                    self.h *= 0.5
                    continue
                advanced = True
                break
            if not advanced:
                self.status = "step_underflow"
                return
            self.u = _rebase_nodes(u_new, self.m, self.n)
            self.prev_tangent = t
            flow = self.corr.flow_at(self.u[-1])
            orbit = self.corr.orbit_at(self.u, self.m, self.n)
            param = float(self.u[-1])
            self.points.append(BranchPoint(param=param, orbit=orbit))
            log.debug("point d=%.8f T=%.4f m=%d h=%.3g res=%.2e",
                      param, orbit.period, self.m, self.h, orbit.residual)
            self._check_events(prev_orbit, prev_u, orbit, t, self.h)
            hom = _homoclinic_event(orbit, param,
                                    _with_param(self.p, self.which, param),
                                    flow, self.proxy_period,
                                    self.proxy_distance)
            if hom is not None:
                self.events.append(hom)
                self.status = "homoclinic"
                return
            if orbit.period > 3.0 * self.proxy_period:
                self.status = "period_blowup"
                return
            self._roll_anchor()
            self._maybe_renode()
            # anchor the phase on the (possibly rolled or renoded) node 0
            self.phase_row, self.phase_val = _phase_condition(
                self.corr.flow_at(self.u[-1]), self.u[:self.n])
            prev_orbit, prev_u = orbit, self.u.copy()
            self.h = min(self.h * 1.3, STEP_MAX)
        self.status = "max_points"

    def _finish_at_range_end(self, t: np.ndarray) -> bool:
        """Try to land exactly on the range boundary; True if the run ends."""
        bound = self.hi if t[-1] > 0 else self.lo
        if abs(t[-1]) < 1e-3:
            # tangent runs along the boundary; treat as an end
            self.status = "range_end"
            return True
        h_land = (bound - self.u[-1]) / t[-1]
        if h_land < 0:
            self.status = "range_end"
            return True
        guess = self.u + h_land * t
        guess[-1] = bound
        row = np.zeros(self.u.size)
        row[-1] = 1.0
        try:
            u_end = self.corr.correct(guess, self.m, self.n, self.phase_row,
                                      self.phase_val, row, guess)[0]
        except (NoConvergence, OscillaChainError):
            self.status = "range_end"
            return True
        self.u = _rebase_nodes(u_end, self.m, self.n)
        orbit = self.corr.orbit_at(self.u, self.m, self.n)
        self.points.append(BranchPoint(param=float(self.u[-1]), orbit=orbit))
        self.status = "range_end"
        return True


def continue_branch(seed: PeriodicOrbit, p: Parameters, which: str,
                    rng: tuple[float, float], h0: float = 0.01, *,
                    tol: float = 1e-9,
                    opts: IntegratorOptions | None = None,
                    max_points: int = 1500,
                    directions: tuple[int, ...] = (-1, 1),
                    proxy_period: float = PROXY_PERIOD,
                    proxy_distance: float = PROXY_DISTANCE,
                    event_kinds: tuple[str, ...] = ("fold",
                                                    "period_doubling",
                                                    "torus")) -> Branch:
    """Trace the rotating-wave branch through a seed orbit.

    which selects the free parameter (delta or k); rng bounds it.  The
    branch is explored in both tangent orientations from the seed unless
    directions restricts it.  Each direction ends at the range boundary,
    at a homoclinic proxy (period above proxy_period while passing within
    proxy_distance of an equilibrium), on step underflow, or at the point
    budget; fold, period-doubling and torus events are bisected to
    PARAM_TOL.  event_kinds restricts which multiplier crossings are
    located (bisection near an accumulation of crossings is the dominant
    cost when only some kinds are wanted).
    """
    if which not in ("delta", "k"):
        raise ValueError(f"unknown continuation parameter {which!r}")
    if not seed.residual <= tol:
        raise ValueError(
            f"seed orbit residual {seed.residual:.3e} above {tol:.1e}")
    opts = opts or _CONT_OPTS
    param0 = _param_of(p, which)
    if not (min(rng) <= param0 <= max(rng)):
        raise ValueError("seed parameter lies outside the range")
    runs: dict[int, _DirectionRun] = {}
    for d in directions:
        run = _DirectionRun(seed, p, which, rng, h0, d, tol, opts, max_points,
                            proxy_period, proxy_distance, event_kinds)
        run.run()
        runs[d] = run
    seed_pt = BranchPoint(param=param0, orbit=seed)
    back = runs.get(-1)
    fwd = runs.get(1)
    points: list[BranchPoint] = []
    events: list[BranchEvent] = []
    if back is not None:
        points.extend(reversed(back.points))
        events.extend(reversed(back.events))
    points.append(seed_pt)
    if fwd is not None:
        points.extend(fwd.points)
        events.extend(fwd.events)
    statuses = (back.status if back else "not_run",
                fwd.status if fwd else "not_run")
    return Branch(parameter=which, fixed_other=(p.k if which == "delta"
                                                else p.delta),
                  points=points, events=events, statuses=statuses)


def _half_period_split(orbit: PeriodicOrbit, p: Parameters,
                       opts: IntegratorOptions) -> float:
    """Distance between the half-period map and a plain half-winding shift.

    Zero for a period-one orbit traversed twice; order sqrt of the
    parameter offset for a genuine period-doubled orbit near its birth.
    """
    flow = Flow(p, opts)
    half = flow.advance(orbit.anchor, 0.5 * orbit.period)
    shift = np.pi * orbit.winding.array
    return float(np.max(np.abs(half - orbit.anchor - shift)))


def period_doubling_cascade(branch: Branch, p: Parameters, depth: int = 3,
                            *, h0: float = 0.005, span: float | None = 0.05,
                            tol: float = 1e-9) -> list[Branch]:
    """Follow successive period-doubled branches from a PD event.

    Each level seeds the doubled orbit just off its parent's first
    period-doubling event and continues it within span of the event (the
    parent's full range when span is None); failures end the cascade
    early and are logged.
    """
    levels: list[Branch] = []
    current = branch
    parent_rng = (float(np.min(branch.params)), float(np.max(branch.params)))
    for level in range(depth):
        pds = current.events_of("period_doubling")
        if not pds:
            log.warning("cascade stopped at level %d: no PD event", level)
            break
        event = pds[0]
        doubled = None
        # the doubled orbit's amplitude grows like sqrt of the parameter
        # offset, so a too small seed perturbation falls back onto the
        # parent traversed twice; escalate offset and amplitude together
        for off, side, amp in itertools.product(
                (1e-3, 5e-3, 2e-2), (-1.0, 1.0), (0.05, 0.15)):
            val = event.param + side * off
            if not parent_rng[0] <= val <= parent_rng[1]:
                continue
            p_side = _with_param(p, current.parameter, val)
            try:
                guess, w2 = double_period_seed(event.orbit, p_side,
                                               amplitude=amp)
                cand = find_orbit(guess, w2, p_side,
                                  m=max(8, 2 * event.orbit.m), tol=tol)
            except (OscillaChainError, ValueError):
                continue
            # a correction back onto the parent traversed twice closes up
            # already at half the period; a genuine doubled orbit does not
            if _half_period_split(cand, p_side, _TIGHT) < 1e-5:
                continue
            doubled = (cand, p_side)
            break
        if doubled is None:
            log.warning("cascade stopped at level %d: doubled orbit did "
                        "not converge", level)
            break
        cand, p_side = doubled
        if span is None:
            rng = parent_rng
        else:
            rng = (max(parent_rng[0], event.param - span),
                   min(parent_rng[1], event.param + span))
        current = continue_branch(cand, p_side, current.parameter, rng,
                                  h0=h0, tol=tol)
        levels.append(current)
    return levels


def _seed_orbit_at_k(N: int, k: float, deltas: np.ndarray, *,
                     n_ic: int = 24, t_end: float = 600.0,
                     t_settle: float = 450.0, tol: float = 1e-9,
                     max_iter: int = 10, guess_period_cap: float = 60.0,
                     ) -> tuple[PeriodicOrbit, Parameters] | None:
    """Find one converged rotating orbit at coupling k by delta sweep.

    Rotating-wave basins can be a few percent of the torus, so many
    initial conditions per delta are needed; settled (non-slipping) runs
    are cheap to discard.  A harvest from a stable orbit converges on the
    first Newton try, so repeated failures mean the attractor is chaotic
    and the delta is abandoned.  Harvests with a return time above
    guess_period_cap are intermittent slips past a fold ghost, not
    orbits, and Newton on them is as expensive as it is hopeless.
    """
    for i_d, d in enumerate(deltas):
        p = Parameters.travelling_wave(N, k, float(d))
        newton_failures = 0
        for trial in range(n_ic):
            rng = np.random.default_rng(
                1_000_003 * i_d + 7919 * trial + int(1e6 * (k + 2.0)))
            x0 = rng.uniform(0.0, 2.0 * np.pi, N)
            try:
                traj = simulate(x0, p, t_end, dt_sample=0.25)
                guess = guess_from_simulation(traj, p, t_settle)
            except OscillaChainError:
                continue
            if guess[1] > guess_period_cap:
                continue
            try:
                orbit = find_orbit(guess[:2], guess[2], p, m=4, tol=tol,
                                   max_iter=max_iter)
            except OscillaChainError:
                newton_failures += 1
                if newton_failures >= 3:
                    break
                continue
            return orbit, p
    return None


def _warm_candidates(branches: list[Branch],
                     n_bins: int = 6) -> list[BranchPoint]:
    """Representative short-period branch points spread over delta.

    Used to warm-start the neighboring grid k: the shortest orbit per
    delta bin is the best conditioned Newton target after a small k step.
    """
    pts = [pt for br in branches for pt in br.points
           if pt.orbit.period < 60.0]
    if not pts:
        return []
    params = np.array([pt.param for pt in pts])
    lo, hi = float(params.min()), float(params.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    picks: list[BranchPoint] = []
    for b in range(n_bins):
        in_bin = [pt for pt in pts
                  if edges[b] <= pt.param <= edges[b + 1]]
        if in_bin:
            picks.append(min(in_bin, key=lambda pt: pt.orbit.period))
    return picks


def _warm_seed(branches: list[Branch], N: int, k: float,
               tol: float) -> tuple[PeriodicOrbit, Parameters] | None:
    """Correct a neighboring grid point's orbit onto coupling k."""
    for pt in _warm_candidates(branches):
        p_try = Parameters.travelling_wave(N, k, float(pt.param))
        try:
            orbit = find_orbit((pt.orbit.anchor, pt.orbit.period),
                               pt.orbit.winding, p_try, m=4, tol=tol)
        except OscillaChainError:
            continue
        return orbit, p_try
    return None


def trace_region(N: int, k_grid: np.ndarray, *,
                 delta_range: tuple[float, float] = (0.02, math.pi - 0.02),
                 seed_deltas: np.ndarray | None = None,
                 h0: float = 0.01, tol: float = 1e-9,
                 mirror_seed: bool = True, seeding: str = "auto",
                 proxy_period: float = PROXY_PERIOD,
                 proxy_distance: float = PROXY_DISTANCE) -> RegionBoundary:
    """Assemble the rotating-wave region boundary over a k grid.

    At each grid k an orbit is seeded and its delta-branch continued
    across delta_range; extremal fold and homoclinic events per k form
    the lower/upper boundary polylines.  Because the field depends on
    delta only through its coupling value, a branch confined to one side
    of pi/2 implies the exact mirror interval: its events are reflected
    to pi - delta instead of re-continuing the mirrored branch.

    seeding picks the per-k strategy: "simulate" runs an attractor sweep
    over seed_deltas at every grid point, which only sees stable orbits;
    "auto" (default) bootstraps one grid point that way and then marches
    outward, warm-starting each k from its neighbor's branch so purely
    unstable parts of the region are found too, with the simulation
    sweep as fallback.  Grid points where every strategy fails are
    recorded in empty_k.
    """
    if seeding not in ("auto", "simulate"):
        raise ValueError(f"unknown seeding strategy {seeding!r}")
    k_grid = np.sort(np.asarray(k_grid, dtype=float))
    if seed_deltas is None:
        # descending fine sweep: stable windows can be a few hundredths
        # wide and sit at the top of the region, so a coarse sweep walks
        # straight past them into the chaotic range below
        seed_deltas = np.arange(1.45, 0.099, -0.025)
    region = RegionBoundary(grid=k_grid)

    def run_k(k: float, orbit: PeriodicOrbit,
              p: Parameters) -> list[Branch]:
        # only fold crossings are bisected: the boundary consists of
        # folds and homoclinic ends, and PD/torus bisections dominate the
        # cost where doubling cascades accumulate
        branches = [continue_branch(orbit, p, "delta", delta_range, h0,
                                    tol=tol, proxy_period=proxy_period,
                                    proxy_distance=proxy_distance,
                                    event_kinds=("fold",))]
        pr = np.asarray(branches[0].params)
        spans_middle = (float(pr.min()) <= 0.5 * math.pi <= float(pr.max()))
        region.windows.append(RegionWindow(
            k=float(k), low=float(pr.min()), high=float(pr.max()),
            mirrored=mirror_seed and not spans_middle))
        found: list[RegionEvent] = []
        for br in branches:
            for ev in br.events:
                if ev.kind == "torus":
                    continue
                kind = ("homoclinic" if ev.kind == "homoclinic_proxy"
                        else ev.kind)
                found.append(RegionEvent(k=float(k), delta=float(ev.param),
                                         kind=kind,
                                         saddle_pattern=ev.saddle_pattern))
        if mirror_seed and not spans_middle:
            # disconnected mirror interval: the field is invariant under
            # delta -> pi - delta, so the mirrored branch is the exact
            # reflection of this one; a saddle's pattern bits flip
            # because its coordinates keep their values while the base
            # point moves to the mirrored delta
            for ev in list(found):
                flipped = (None if ev.saddle_pattern is None else
                           tuple(1 - b for b in ev.saddle_pattern))
                found.append(RegionEvent(k=ev.k,
                                         delta=float(math.pi - ev.delta),
                                         kind=ev.kind,
                                         saddle_pattern=flipped))
        unique: dict[tuple[str, float], RegionEvent] = {}
        for ev in found:
            unique[(ev.kind, round(ev.delta, 4))] = ev
        events = sorted(unique.values(), key=lambda e: e.delta)
        region.all_events.extend(events)
        boundary = [e for e in events if e.kind in ("fold", "homoclinic")]
        if boundary:
            region.lower.append(boundary[0])
            region.upper.append(boundary[-1])
        return branches

    if seeding == "simulate":
        for k in k_grid:
            seeded = _seed_orbit_at_k(N, float(k), seed_deltas, tol=tol)
            if seeded is None:
                region.empty_k.append(float(k))
                log.info("no rotating orbit found at k=%.4f", k)
                continue
            run_k(float(k), *seeded)
        return region

    # bootstrap: scan from the middle of the grid outward until one grid
    # point seeds from simulation
    order = np.argsort(np.abs(k_grid - np.median(k_grid)), kind="stable")
    boot = None
    for i in order:
        seeded = _seed_orbit_at_k(N, float(k_grid[i]), seed_deltas, tol=tol)
        if seeded is not None:
            boot = int(i)
            break
    if boot is None:
        region.empty_k.extend(float(k) for k in k_grid)
        return region
    boot_branches = run_k(float(k_grid[boot]), *seeded)

    # march outward, reusing the neighbor's branch as the warm start and
    # allowing one seeding miss before declaring the rest of a side empty
    for step in (1, -1):
        prev = boot_branches
        misses = 0
        i = boot + step
        while 0 <= i < len(k_grid) and misses <= 1:
            k = float(k_grid[i])
            seeded = _warm_seed(prev, N, k, tol)
            if seeded is None:
                seeded = _seed_orbit_at_k(N, k, seed_deltas, tol=tol)
            if seeded is None:
                region.empty_k.append(k)
                log.info("no rotating orbit found at k=%.4f", k)
                misses += 1
            else:
                prev = run_k(k, *seeded)
                misses = 0
            i += step
        while 0 <= i < len(k_grid):
            region.empty_k.append(float(k_grid[i]))
            i += step
    region.empty_k.sort()
    region.all_events.sort(key=lambda e: (e.k, e.delta))
    region.lower.sort(key=lambda e: e.k)
    region.upper.sort(key=lambda e: e.k)
    region.windows.sort(key=lambda w: w.k)
    return region


def export_branch_csv(branch: Branch, path: str | Path) -> None:
    """Write branch points (events interleaved in parameter order)."""
    n = branch.points[0].orbit.anchor.size if branch.points else 0
    header = (["param", "period"]
              + [f"anchor_{i + 1}" for i in range(n)]
              + ["lead_mult_re", "lead_mult_im", "stable", "event"])
    csv_kind = {"fold": "fold", "period_doubling": "pd",
                "homoclinic_proxy": "homoclinic", "torus": "torus"}

    def row(param: float, orbit: PeriodicOrbit, event: str) -> list[str]:
        mu = nontrivial_multipliers(orbit.multipliers)
        lead = mu[int(np.argmax(np.abs(mu)))] if mu.size else complex(0)
        return ([fmt(param), fmt(orbit.period)]
                + [fmt(v) for v in orbit.anchor]
                + [fmt(lead.real), fmt(lead.imag),
                   "1" if orbit.stable else "0", event])

    entries: list[tuple[int, int, list[str]]] = []
    for i, pt in enumerate(branch.points):
        entries.append((i, 0, row(pt.param, pt.orbit, "")))
    # events are appended next to the closest branch point in order
    for ev in branch.events:
        if ev.orbit is None:
            continue
        params = branch.params
        i = int(np.argmin(np.abs(params - ev.param)))
        entries.append((i, 1, row(ev.param, ev.orbit, csv_kind[ev.kind])))
    entries.sort(key=lambda e: (e[0], e[1]))
    write_csv(path, header, [e[2] for e in entries])


def export_region_csv(region: RegionBoundary, path: str | Path) -> None:
    header = ["k", "delta_event", "kind", "saddle_pattern"]
    rows = []
    for ev in region.all_events:
        pattern = ("" if ev.saddle_pattern is None
                   else "".join(str(b) for b in ev.saddle_pattern))
        rows.append([fmt(ev.k), fmt(ev.delta), ev.kind, pattern])
    write_csv(path, header, rows)
