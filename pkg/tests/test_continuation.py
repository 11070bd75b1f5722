"""Branch continuation, event bisection, cascade, region export."""
from dataclasses import replace

import numpy as np
import pytest

from oscillachain.continuation import (Branch, BranchPoint, RegionBoundary,
                                       RegionEvent, continue_branch,
                                       export_branch_csv, export_region_csv,
                                       period_doubling_cascade)
from oscillachain.model import Parameters
from oscillachain.orbits import find_orbit, nontrivial_multipliers
from oscillachain.serialize import read_csv
from oscillachain.simulate import WindingVector

P2 = Parameters.travelling_wave(2, -0.5, 1.0)
P3 = Parameters.travelling_wave(3, -0.5, 1.215)

# frozen event locations for the N=2, delta=1 coupling branch and the
# N=3, k=-1/2 detuning branch, from converged bisection runs
FOLD_K = -0.5947413
HOM_K = -0.49774409
PD_DELTA = 1.2158160


@pytest.fixture(scope="module")
def branch_k2():
    seed = find_orbit((np.array([0.85, 2.26]), 13.3), WindingVector((0, 1)),
                      P2, m=4)
    # short proxy period keeps the homoclinic tails cheap here; event
    # locations do not depend on it
    return continue_branch(seed, P2, "k", (-0.65, -0.45), 0.01,
                           proxy_period=80.0)


@pytest.fixture(scope="module")
def branch_d3():
    seed = find_orbit((np.array([4.4474573, 5.93319653, 5.12904713]), 9.357),
                      WindingVector((0, 1, 1)), P3, m=6)
    return continue_branch(seed, P3, "delta", (1.19, 1.23), 0.01)


def test_fold_location_frozen(branch_k2):
    folds = branch_k2.events_of("fold")
    assert len(folds) == 1
    assert folds[0].param == pytest.approx(FOLD_K, abs=2e-6)
    # near the fold the leading nontrivial multiplier sits at +1; the
    # square-root branch geometry turns the 1e-6 parameter tolerance
    # into an order sqrt(1e-6) multiplier offset
    mu = nontrivial_multipliers(folds[0].orbit.multipliers)
    assert min(abs(m - 1.0) for m in mu) < 5e-3


def test_homoclinic_ends_frozen(branch_k2):
    assert branch_k2.statuses == ("homoclinic", "homoclinic")
    homs = branch_k2.events_of("homoclinic_proxy")
    assert len(homs) == 2
    # both arcs die on the same coupling value against mirrored saddles
    for ev in homs:
        assert ev.param == pytest.approx(HOM_K, abs=2e-6)
        assert ev.orbit.period > 80.0
    assert {ev.saddle_pattern for ev in homs} == {(0, 1), (1, 0)}


def test_branch_residuals_within_tolerance(branch_k2):
    assert max(pt.orbit.residual for pt in branch_k2.points) <= 1e-9


def test_fold_separates_stability(branch_k2):
    # points below the fold parameter come from both sheets: one stable,
    # one not; the seed side (above the fold in k) must contain both
    stable = [pt.param for pt in branch_k2.points if pt.orbit.stable]
    unstable = [pt.param for pt in branch_k2.points if not pt.orbit.stable]
    assert stable and unstable
    assert min(stable) < FOLD_K + 1e-3
    assert min(unstable) < FOLD_K + 1e-3


def test_doubling_location_frozen(branch_d3):
    assert branch_d3.statuses == ("range_end", "range_end")
    pds = branch_d3.events_of("period_doubling")
    assert len(pds) == 1
    assert pds[0].param == pytest.approx(PD_DELTA, abs=2e-6)


def test_cascade_first_level(branch_d3):
    levels = period_doubling_cascade(branch_d3, P3, depth=1, span=0.02)
    assert len(levels) == 1
    doubled = levels[0]
    assert all(pt.orbit.winding.w == (0, 2, 2) for pt in doubled.points)
    assert max(pt.orbit.residual for pt in doubled.points) <= 1e-9
    parent_T = branch_d3.events_of("period_doubling")[0].orbit.period
    periods = [pt.orbit.period for pt in doubled.points]
    assert min(periods) == pytest.approx(2.0 * parent_T, rel=1e-3)


def test_continue_branch_input_validation(branch_k2):
    seed = branch_k2.points[len(branch_k2.points) // 2].orbit
    with pytest.raises(ValueError):
        continue_branch(seed, P2, "gamma", (-0.65, -0.45))
    with pytest.raises(ValueError):
        continue_branch(seed, P2, "k", (-0.3, -0.2))
    bad = replace(seed, residual=1.0)
    with pytest.raises(ValueError):
        continue_branch(bad, P2, "k", (-0.65, -0.45))


def test_branch_csv_roundtrip(branch_d3, tmp_path):
    path = tmp_path / "branch.csv"
    export_branch_csv(branch_d3, path)
    header, rows = read_csv(path)
    assert header == ["param", "period", "anchor_1", "anchor_2", "anchor_3",
                      "lead_mult_re", "lead_mult_im", "stable", "event"]
    # event rows are interleaved with the point rows
    assert len(rows) == len(branch_d3.points) + len(branch_d3.events)
    assert sum(1 for r in rows if r[-1] == "pd") == 1
    assert float(rows[0][0]) == branch_d3.points[0].param
    assert float(rows[0][1]) == branch_d3.points[0].orbit.period


def test_region_csv_export(tmp_path):
    region = RegionBoundary(grid=np.array([-0.5, -0.4]))
    region.all_events.extend([
        RegionEvent(k=-0.5, delta=0.25, kind="fold"),
        RegionEvent(k=-0.5, delta=2.9, kind="homoclinic",
                    saddle_pattern=(0, 1)),
    ])
    path = tmp_path / "region.csv"
    export_region_csv(region, path)
    header, rows = read_csv(path)
    assert header == ["k", "delta_event", "kind", "saddle_pattern"]
    assert rows[0] == ["-0.5", "0.25", "fold", ""]
    assert rows[1][2:] == ["homoclinic", "01"]
    assert float(rows[1][1]) == 2.9
