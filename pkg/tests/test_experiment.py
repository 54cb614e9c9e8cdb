import dataclasses
import math

import numpy as np
import pytest

from swapqkd.bsm import DetectorParams
from swapqkd.channel import ChannelParams
from swapqkd.errors import ConfigError
from swapqkd.experiment import (
    ENERGY,
    TIME,
    ExperimentConfig,
    _Analysis,
    run_fringe_scan,
    run_qkd_session,
    simulate_chunk,
)
from swapqkd.fringe import fit_visibility
from swapqkd.source import SourceParams
from swapqkd.timebin import BellKind, EnergyBasisSetting, bell_state, coincidence_probability, time_basis_probability

STILL = ChannelParams(length_km=0, delay_drift_rate=0, pol_drift_rate=0)
PERFECT = DetectorParams(efficiency=1.0)
IDEAL = ExperimentConfig(
    channel_a=STILL, channel_b=STILL, eve=PERFECT, alice=PERFECT, bob=PERFECT,
    emission="single", purity=1.0, windows=20_000, master_seed=3,
)
GRID = [2 * math.pi * k / 8 for k in range(8)]


def with_(cfg, **kw):
    return dataclasses.replace(cfg, **kw)


def test_config_validation():
    with pytest.raises(ConfigError) as e:
        with_(IDEAL, windows=0)
    assert e.value.path == "windows"
    with pytest.raises(ConfigError):
        with_(IDEAL, emission="bursty")
    with pytest.raises(ConfigError):
        with_(IDEAL, p_time_alice=1.5)
    with pytest.raises(ConfigError):
        with_(IDEAL, alice=DetectorParams(deadtime_windows=2))


def test_ideal_fringe_has_unit_visibility():
    points = run_fringe_scan(IDEAL, 0.0, GRID, workers=1)
    fit = fit_visibility(points)
    assert abs(fit.V - 1.0) < 0.01
    # cosine shape: (+,+) fraction of heralds tracks (1 + cos phi_A) / 4
    for p in points:
        expected = (1 + math.cos(p.phi_A)) / 4
        frac = p.fourfold_count / p.total_heralds
        assert abs(frac - expected) < 3 * math.sqrt(max(expected * (1 - expected), 1e-4) / p.total_heralds)
        assert p.fourfold_count <= IDEAL.windows


def test_ideal_session_is_error_free():
    _, s = run_qkd_session(IDEAL, workers=1)
    assert s.n_time > 0 and s.n_energy > 0
    assert s.e_b_time == 0 and s.e_b_energy == 0


def test_sifted_count_scales_linearly():
    _, one = run_qkd_session(with_(IDEAL, windows=100_000))
    _, two = run_qkd_session(with_(IDEAL, windows=200_000, master_seed=4))
    n1, n2 = one.n_time + one.n_energy, two.n_time + two.n_energy
    assert abs(n2 / n1 - 2) < 0.05 * 2


def test_results_do_not_depend_on_worker_count():
    cfg = with_(IDEAL, emission="poisson", channel_a=ChannelParams(), channel_b=ChannelParams(length_km=10.6),
                eve=DetectorParams(dark_count_prob_per_window=1e-4), source_a=SourceParams(mu=0.2),
                source_b=SourceParams(mu=0.2), windows=150_000, seconds_per_window=1e-3)
    one = run_fringe_scan(cfg, 0.0, GRID[:4], workers=1)
    two = run_fringe_scan(cfg, 0.0, GRID[:4], workers=2)
    assert one == two
    assert run_qkd_session(cfg, workers=1) == run_qkd_session(cfg, workers=3)


def test_array_path_matches_per_window_path():
    cfg = with_(IDEAL, emission="heralded", source_a=SourceParams(mu=0.3), source_b=SourceParams(mu=0.3),
                eve=DetectorParams(efficiency=0.7), alice=DetectorParams(efficiency=0.8),
                bob=DetectorParams(efficiency=0.8))
    n = 60_000
    zeta = np.full(n, 0.9)
    analysis = _Analysis()
    fast = simulate_chunk(cfg, zeta, analysis, np.random.default_rng(1), vectorized=True)
    slow = simulate_chunk(cfg, zeta, analysis, np.random.default_rng(2), vectorized=False)

    def stats(r):
        return np.array([r.heralds, len(r.slot_a), np.count_nonzero((r.slot_a == 0) & (r.slot_b == 0))])

    a, b = stats(fast), stats(slow)
    assert np.all(np.abs(a - b) < 4 * np.sqrt(a + b))


def test_conditional_idler_state_is_psi_plus():
    """Joint outcomes of the idlers follow the Psi+ predictions in both bases."""
    records, _ = run_qkd_session(with_(IDEAL, windows=800_000), workers=1)
    assert len(records) >= 100_000
    psi_plus = bell_state(BellKind.PSI_PLUS)
    zero = EnergyBasisSetting(0.0)
    predicted = {
        "time": {(i - 1, j - 1): p for (i, j), p in time_basis_probability(psi_plus).items()},
        "energy": {
            ((1 - sa) // 2, (1 - sb) // 2): p
            for (sa, sb), p in coincidence_probability(psi_plus, zero, zero).items()
        },
    }
    for basis in ("time", "energy"):
        raw = [
            (r.bit_A, 1 - r.bit_B if basis == "time" else r.bit_B)
            for r in records
            if r.basis == basis
        ]
        n = len(raw)
        for outcome, p in predicted[basis].items():
            freq = sum(1 for x in raw if x == outcome) / n
            assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_basis_choice_follows_probabilities():
    cfg = with_(IDEAL, windows=200_000, p_time_alice=1.0, p_time_bob=1.0)
    _, s = run_qkd_session(cfg)
    assert s.n_energy == 0 and s.n_time > 0


def test_drift_lowers_visibility():
    drifting = ChannelParams(length_km=0, delay_drift_rate=30.0, pol_drift_rate=0.3, feedback=False)
    cfg = with_(IDEAL, channel_a=drifting, channel_b=drifting, windows=50_000, seconds_per_window=0.01)
    assert fit_visibility(run_fringe_scan(cfg, 0.0, GRID)).V < 0.9
