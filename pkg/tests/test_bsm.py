import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swapqkd.bsm import (
    PSI_MINUS_MASKS,
    Arrivals,
    BsmOutcome,
    DetectorParams,
    classify,
    classify_mask,
    click_distribution,
    fock_click_distribution,
    pattern_from_mask,
    sample_clicks,
    swap_tables,
)
from swapqkd.errors import InvalidInputError
from swapqkd.timebin import BellKind, TimeBinState, bell_state

IDEAL = DetectorParams(efficiency=1.0)
complexes = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


def cross_detector(pattern):
    return len({d for d, _ in pattern}) == 2


def test_psi_minus_goes_to_different_detectors_and_bins():
    dist = click_distribution(bell_state(BellKind.PSI_MINUS), 1.0)
    p = sum(v for k, v in dist.items() if classify(k) is BsmOutcome.PSI_MINUS)
    assert p == pytest.approx(1.0, abs=1e-12)


def test_psi_plus_goes_to_one_detector_two_bins():
    dist = click_distribution(bell_state(BellKind.PSI_PLUS), 1.0)
    p = sum(v for k, v in dist.items() if classify(k) is BsmOutcome.PSI_PLUS)
    assert p == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("zeta, expected", [(1.0, 0.0), (0.0, 0.5)])
def test_hong_ou_mandel(zeta, expected):
    same_bin = TimeBinState.product([1, 0], [1, 0])
    dist = click_distribution(same_bin, zeta)
    assert sum(v for k, v in dist.items() if cross_detector(k)) == pytest.approx(expected, abs=1e-12)


@given(st.lists(complexes, min_size=4, max_size=4), st.floats(0, 1))
def test_matches_fock_oracle(amps, zeta):
    if np.linalg.norm(amps) < 1e-6:
        return
    state = TimeBinState.from_amplitudes(amps)
    dist = click_distribution(state, zeta)
    oracle = fock_click_distribution(state, zeta)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    for key in set(dist) | set(oracle):
        assert dist.get(key, 0.0) == pytest.approx(oracle.get(key, 0.0), abs=1e-12)


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        click_distribution(bell_state(BellKind.PSI_PLUS), 1.5)
    with pytest.raises(InvalidInputError):
        click_distribution(TimeBinState(np.ones(4, dtype=complex)), 0.5)
    with pytest.raises(InvalidInputError):
        DetectorParams(efficiency=1.5)
    with pytest.raises(InvalidInputError):
        DetectorParams(dark_count_prob_per_window=1.0)


def test_classify_examples():
    assert classify(frozenset({(1, 1), (2, 2)})) is BsmOutcome.PSI_MINUS
    assert classify(frozenset({(1, 1), (1, 2)})) is BsmOutcome.PSI_PLUS
    assert classify(frozenset({(1, 1)})) is BsmOutcome.INCONCLUSIVE


def test_psi_minus_needs_both_detectors():
    for mask in range(16):
        if classify_mask(mask) is BsmOutcome.PSI_MINUS:
            assert cross_detector(pattern_from_mask(mask))
            assert len({b for _, b in pattern_from_mask(mask)}) == 2


def test_sampling_edge_cases():
    rng = np.random.default_rng(0)
    assert sample_clicks(Arrivals(), 1.0, DetectorParams(), rng) == frozenset()
    blind = DetectorParams(efficiency=0.0)
    arrivals = Arrivals((1,), (2,), bell_state(BellKind.PSI_MINUS))
    assert all(sample_clicks(arrivals, 1.0, blind, rng) == frozenset() for _ in range(100))


def test_sample_clicks_matches_distribution():
    state = bell_state(BellKind.PSI_PLUS)
    zeta, n = 0.5, 100_000
    rng = np.random.default_rng(8)
    arrivals = Arrivals((1,), (2,), state)
    counts = {}
    for _ in range(n):
        pat = sample_clicks(arrivals, zeta, IDEAL, rng)
        counts[pat] = counts.get(pat, 0) + 1
    dist = click_distribution(state, zeta)
    assert set(counts) <= set(dist)
    for pat, p in dist.items():
        assert abs(counts.get(pat, 0) / n - p) < 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_swap_herald_rate_and_idler_state():
    phi = bell_state(BellKind.PHI_PLUS)
    itab, _ = swap_tables(phi, phi)
    masks = (1 << itab.slots[:, 0]) | (1 << itab.slots[:, 1])
    # each of the two accepted patterns has weight 1/8, together 1/4
    for m in PSI_MINUS_MASKS:
        assert itab.probs[masks == m].sum() == pytest.approx(1 / 8, abs=1e-12)
        for anc in itab.ancilla[masks == m]:
            overlap = abs(np.vdot(bell_state(BellKind.PSI_MINUS).amplitudes, anc))
            assert overlap == pytest.approx(1.0, abs=1e-12)

    n = 1_000_000
    k = itab.sample(np.random.default_rng(2), n)
    hits = np.isin(masks[k], PSI_MINUS_MASKS).mean()
    assert abs(hits - 0.25) < 3 * math.sqrt(0.25 * 0.75 / n)
