import numpy as np
import pytest

from nilmcomplexity.disaggregator import (PFConfig, ParticleFilter, build_fhmm, disaggregate,
                                          score, systematic_resample)
from nilmcomplexity.domain import ApplianceSet, DisaggregationResult, ValidationError
from nilmcomplexity.ingestion import activation_schedule, square_wave, synthesize


def test_two_state_transition_matrix():
    (hmm,) = build_fhmm(ApplianceSet.from_watts([[0, 100]]), PFConfig(p_stay=0.95))
    assert np.allclose(hmm.transition, [[0.95, 0.05], [0.05, 0.95]])
    assert np.allclose(hmm.initial, [0.5, 0.5])


def test_three_state_off_diagonals():
    (hmm,) = build_fhmm(ApplianceSet.from_watts([[0, 100, 200]]), PFConfig(p_stay=0.95))
    off = hmm.transition[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 0.025)
    assert np.allclose(hmm.transition.sum(axis=1), 1.0, atol=1e-9)


def test_identity_transitions_warn():
    with pytest.warns(UserWarning, match="identities"):
        (hmm,) = build_fhmm(ApplianceSet.from_watts([[0, 100]]), PFConfig(p_stay=1.0))
    assert np.array_equal(hmm.transition, np.eye(2))


def test_config_validation():
    with pytest.raises(ValidationError):
        PFConfig(particle_count=0)
    with pytest.raises(ValidationError):
        PFConfig(p_stay=0)
    assert PFConfig().sigma_obs == 5.0


def test_systematic_resample_counts():
    rng = np.random.default_rng(0)
    w = np.array([0.5, 0.25, 0.125, 0.125])
    for _ in range(20):
        idx = systematic_resample(w, rng)
        counts = np.bincount(idx, minlength=4)
        # systematic resampling keeps each count within one of n * w
        assert np.all(np.abs(counts - 4 * w) < 1)
    big = np.random.default_rng(1).dirichlet(np.ones(50))
    counts = np.bincount(systematic_resample(big, rng), minlength=50)
    assert np.all(np.abs(counts - 50 * big) < 1)


def _run(appliances, schedule, noise=0.0, sigma_obs=10.0, seed=0, period=60.0):
    trace = synthesize(appliances, schedule, noise_sigma=noise, period=period, seed=seed)
    cfg = PFConfig(sigma_obs=sigma_obs, seed=seed)
    return trace, disaggregate(trace, build_fhmm(appliances, cfg), cfg, truth=trace)


def test_single_appliance_exact():
    apps = ApplianceSet.from_watts({"heater": [0, 1000]})
    schedule = {"heater": square_wave(600, on=20, off=30)}
    trace, result = _run(apps, schedule)
    assert np.array_equal(result.states[:, 0], schedule["heater"])
    assert result.estimated_kwh[0] == pytest.approx(result.real_kwh[0], rel=0.01)


def test_two_separated_appliances():
    apps = ApplianceSet.from_watts({"lamp": [0, 100], "oven": [0, 1000]})
    lamp = square_wave(1000, on=30, off=70)
    oven = square_wave(1000, on=30, off=70, phase=50)
    assert not np.any(lamp & oven)
    _, result = _run(apps, {"lamp": lamp, "oven": oven}, noise=2.0)
    s = score(result)
    assert np.allclose(s.estimated_kwh, s.real_kwh, rtol=0.05)


def test_duplicate_demand_only_total_is_reliable():
    apps = ApplianceSet.from_watts({"a": [0, 500], "b": [0, 500]})
    a = square_wave(1000, on=30, off=70)
    b = square_wave(1000, on=40, off=60, phase=20)
    _, result = _run(apps, {"a": a, "b": b}, noise=2.0)
    s = score(result)
    assert s.total_estimated_kwh == pytest.approx(s.total_real_kwh, rel=0.05)


def test_seed_determinism():
    apps = ApplianceSet.from_watts({"a": [0, 300], "b": [0, 120, 700]})
    schedule = activation_schedule(apps, 400, seed=2)
    _, r1 = _run(apps, schedule, noise=5.0, seed=7)
    _, r2 = _run(apps, schedule, noise=5.0, seed=7)
    assert r1.states.tobytes() == r2.states.tobytes()
    assert r1.estimated_kwh == r2.estimated_kwh


def test_weights_normalised_every_step():
    apps = ApplianceSet.from_watts({"a": [0, 300], "b": [0, 120, 700]})
    trace = synthesize(apps, activation_schedule(apps, 300, seed=5), noise_sigma=5, seed=5)
    pf = ParticleFilter(build_fhmm(apps), PFConfig(seed=1))
    for t, y in enumerate(trace.channel("aggregate")):
        pf.step(float(y), first=(t == 0))
        assert abs(pf.weights.sum() - 1.0) <= 1e-9
        assert np.all(pf.weights >= 0)


def test_vanished_weights_are_reinitialised(caplog):
    apps = ApplianceSet.from_watts({"a": [0, 300]})
    pf = ParticleFilter(build_fhmm(apps), PFConfig(particle_count=10, seed=1))
    pf.weights = np.zeros(10)
    pf.update(100.0)
    assert pf.degenerate_steps == 1
    assert np.allclose(pf.weights, 0.1)
    assert "vanished" in caplog.text


def test_energy_conservation():
    apps = ApplianceSet.from_watts({"a": [0, 300], "b": [0, 120, 700], "c": [0, 45]})
    _, result = _run(apps, activation_schedule(apps, 500, seed=8), noise=5.0)
    assert result.total_estimated_kwh == pytest.approx(sum(result.estimated_kwh), abs=1e-9)
    s = score(result)
    assert s.total_estimated_kwh == pytest.approx(sum(s.estimated_kwh), abs=1e-9)
    assert all(e >= 0 for e in s.estimated_kwh)


def test_empty_trace_rejected():
    apps = ApplianceSet.from_watts({"a": [0, 300]})
    with pytest.raises(ValidationError):
        disaggregate(np.array([]), build_fhmm(apps), sample_period=1.0)


def _result(est, real=None, names=("a", "b")):
    return DisaggregationResult(names, np.zeros((1, len(names)), dtype=int),
                                np.zeros((1, len(names))), 1.0, tuple(est),
                                None if real is None else tuple(real))


def test_score_perfect_and_all_off():
    s = score(_result([1.0, 2.0], [1.0, 2.0]))
    assert s.real_kwh == s.estimated_kwh
    off = score(_result([0.0, 0.0], [1.0, 2.0]))
    assert off.estimated_kwh == (0.0, 0.0)
    assert off.rows()[-1] == {"appliance": "total", "real_kwh": 3.0, "estimated_kwh": 0.0}


def test_score_needs_truth():
    with pytest.raises(ValidationError, match="ground truth"):
        score(_result([1.0, 2.0]))


def test_result_json_round_trip():
    apps = ApplianceSet.from_watts({"a": [0, 300], "b": [0, 120, 700]})
    _, result = _run(apps, activation_schedule(apps, 200, seed=1))
    again = DisaggregationResult.from_dict(result.to_dict(), apps)
    assert np.array_equal(again.states, result.states)
    assert np.array_equal(again.estimated_power, result.estimated_power)
    assert again.real_kwh == result.real_kwh
