"""Monte Carlo trapping statistics."""
import json

import numpy as np
import pytest

from oscillachain import basin
from oscillachain.basin import (K_RANGE, BasinNStats, export_basin_json,
                                run_experiment, run_trial,
                                _draw_realizations)
from oscillachain.model import Parameters, torus_distance
from oscillachain.simulate import simulate


def test_trial_determinism(warm_kernels):
    a = run_trial(2, 40, 7)
    b = run_trial(2, 40, 7)
    assert np.array_equal(a.trap_times, b.trap_times)
    assert a.fraction_untrapped == b.fraction_untrapped


def test_fraction_is_exact_count(warm_kernels):
    r = run_trial(3, 37, 11)
    untrapped = int(np.count_nonzero(r.trap_times < 0.0))
    assert r.fraction_untrapped == untrapped / 37


def test_k_interval_open_at_minus_one():
    assert K_RANGE[0] == -1.0 + 1e-9
    assert K_RANGE[1] == 0.0


def test_trial_input_validation():
    with pytest.raises(ValueError):
        run_trial(1, 10, 0)
    with pytest.raises(ValueError):
        run_trial(2, 0, 0)
    with pytest.raises(ValueError):
        run_experiment([2], 0, 10, 0)


def test_trapped_stays_trapped(warm_kernels):
    # re-integrating a trapped realization for another 200 units keeps
    # it within twice the trapping radius of the sink
    r = run_trial(2, 24, 11, keep_states=True)
    _, deltas, ks, _ = _draw_realizations(2, 24, 11, K_RANGE,
                                          basin.DELTA_RANGE)
    trapped = np.nonzero(r.trap_times >= 0.0)[0]
    assert trapped.size > 0
    for i in trapped[:8]:
        p = Parameters.travelling_wave(2, float(ks[i]), float(deltas[i]))
        sink = np.full(2, float(deltas[i]))
        traj = simulate(r.final_states[i], p, 200.0, dt_sample=1.0)
        d = max(torus_distance(s, sink) for s in traj.states)
        assert d <= 0.4


def test_starting_at_sink_traps_immediately(warm_kernels, monkeypatch):
    delta, k = 0.7, -0.3

    def fake_draw(N, n_ic, seed, k_range, delta_range):
        from oscillachain.model import SINE, travelling_wave_omega
        states = np.full((n_ic, N), delta)
        deltas = np.full(n_ic, delta)
        ks = np.full(n_ic, k)
        omegas = np.tile(travelling_wave_omega(N, k, delta, SINE),
                         (n_ic, 1))
        return states, deltas, ks, omegas

    monkeypatch.setattr(basin, "_draw_realizations", fake_draw)
    r = run_trial(2, 10, 0)
    assert r.fraction_untrapped == 0.0
    assert np.all(r.trap_times >= 0.0)
    assert np.all(r.trap_times <= 1.0)


def test_single_trial_statistics_collapse(warm_kernels):
    summary = run_experiment([2], 1, 30, 5)
    s = summary.per_n[0]
    assert isinstance(s, BasinNStats)
    assert s.mean == s.q25 == s.q75 == s.minimum == s.maximum
    assert s.fractions == (s.mean,)


def test_synchronized_detuning_control(warm_kernels):
    # with delta pinned to zero every realization falls into the sink;
    # the slowest ones need the enlarged stop window
    r = run_trial(2, 64, 42, window=2000.0, delta_range=(0.0, 0.0))
    assert r.fraction_untrapped == 0.0
    assert float(r.trap_times.min()) >= 0.0


def test_summary_json_schema(warm_kernels, tmp_path):
    summary = run_experiment([2, 3], 2, 16, 3)
    path = tmp_path / "basin.json"
    export_basin_json(summary, path)
    payload = json.loads(path.read_text())
    assert set(payload) == {"protocol", "per_N", "seed_info"}
    assert set(payload["protocol"]) == {"n_ic", "trials", "radius",
                                        "window", "k_range", "delta_range"}
    assert [e["N"] for e in payload["per_N"]] == [2, 3]
    for entry in payload["per_N"]:
        assert set(entry) == {"N", "mean", "q25", "q75", "min", "max",
                              "fractions"}
        assert len(entry["fractions"]) == 2
    assert payload["seed_info"]["base_seed"] == 3
    assert "PCG64" in payload["seed_info"]["algorithm"]
