import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swapqkd.errors import InvalidInputError
from swapqkd.finite_key import (
    SecurityParams,
    SiftedSummary,
    analyze,
    binary_entropy,
    bstep_transform,
    key_rate_bstep,
    key_rate_one_way,
    phase_error_bound,
    serfling_gap,
    simulate_rate_curve,
)

REFERENCE_RUN = SiftedSummary(n_energy=2485, n_time=2611, e_b_energy=0.09980, e_b_time=0.09575)
rates = st.floats(0, 0.5)


def h_direct(x):
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def test_binary_entropy_grid():
    for i in range(1, 1000):
        x = i / 1000
        assert abs(binary_entropy(x) - h_direct(x)) < 1e-12
        assert abs(binary_entropy(x) - binary_entropy(1 - x)) < 1e-12
        assert binary_entropy(x) <= binary_entropy(0.5) == 1.0
    assert binary_entropy(0) == binary_entropy(1) == 0
    with pytest.raises(InvalidInputError):
        binary_entropy(1.1)


def test_serfling_examples():
    assert serfling_gap(1e-10, 2485, 2611) == pytest.approx(0.04873, abs=5e-6)
    assert serfling_gap(1 - 1e-12, 2485, 2611) < 1e-5
    with pytest.raises(InvalidInputError):
        serfling_gap(1e-10, 0, 10)


@given(st.integers(1, 10**6), st.floats(0.1, 10))
def test_serfling_shrinks_with_counts(n, ratio):
    m = max(1, int(n * ratio))
    assert serfling_gap(1e-10, 10 * n, 10 * m) < serfling_gap(1e-10, n, m)


@given(st.floats(1e-30, 0.5), st.floats(0.01, 0.99))
def test_serfling_increases_as_epsilon_shrinks(eps, factor):
    assert serfling_gap(eps * factor, 1000, 1200) > serfling_gap(eps, 1000, 1200)


def test_phase_error_examples():
    assert phase_error_bound(0.09980, 0.04873) == pytest.approx(0.14853, abs=1e-12)
    assert phase_error_bound(0.09575, 0.046379) == pytest.approx(0.142129, abs=1e-12)
    assert phase_error_bound(0.1, 0.0) == 0.1
    assert phase_error_bound(0.9, 0.5) == 1.0


@pytest.mark.parametrize(
    "e_b, e_p, expected",
    [
        (0.0, 0.0, (1.0, 0.0, 0.0)),
        (0.09575, 0.148531, (0.826836, 0.011088, 0.271510)),
        (0.09980, 0.142129, (0.820320, 0.012142, 0.262688)),
    ],
)
def test_bstep_examples(e_b, e_p, expected):
    # quoted to six decimals
    assert bstep_transform(e_b, e_p) == pytest.approx(expected, abs=5e-6)


# e_b' and e_b coincide in floating point within a few ulp of 1/2
@given(st.floats(1e-9, 0.5 - 1e-9), rates)
def test_bstep_invariants(e_b, e_p):
    p_s, e_b1, e_p1 = bstep_transform(e_b, e_p)
    assert 0.5 - 1e-12 <= p_s <= 1
    assert e_b1 < e_b
    assert 0 <= e_p1 <= 1


def test_one_way_examples():
    assert key_rate_one_way(1.0, 0.0, 0.0) == 1.0
    assert key_rate_one_way(1.0, 0.09772, 0.14853) == 0.0
    raw = 1 - 1.16 * binary_entropy(0.09772) - binary_entropy(0.14853)
    assert raw == pytest.approx(-0.142, abs=1e-3)
    r = key_rate_one_way(1.0, 0.11, 0.11, SecurityParams(f_ec=1.0))
    assert r == pytest.approx(0.00016, abs=2e-5)


def test_bstep_rate_examples():
    assert key_rate_bstep(0.0, 0.0) == 0.5
    # direct evaluation of the formula; agree with the quoted values to 1%
    assert key_rate_bstep(0.09575, 0.148531) == pytest.approx(0.022426, rel=0.01)
    assert key_rate_bstep(0.09980, 0.142129) == pytest.approx(0.024407, rel=0.01)


def test_bstep_rate_from_its_own_pieces():
    p_s, e_b1, e_p1 = bstep_transform(0.09575, 0.148531)
    expected = p_s / 2 * (1 - 1.16 * h_direct(e_b1) - h_direct(e_p1))
    assert key_rate_bstep(0.09575, 0.148531) == pytest.approx(expected, abs=1e-15)


def test_reference_run_bits():
    rep = analyze(REFERENCE_RUN)
    assert rep.energy.secure_bits == 60
    assert rep.time.secure_bits == 58
    assert rep.total_bits == 118
    assert rep.time.gap == pytest.approx(0.04873, abs=5e-6)
    assert rep.to_dict()["secure_bits"] == {"energy": 60, "time": 58, "total": 118}


def test_analyze_edge_cases():
    clean = analyze(SiftedSummary(2500, 2500, 0.0, 0.0))
    assert clean.energy.secure_bits > 0 and clean.time.secure_bits > 0
    assert analyze(SiftedSummary(2500, 2500, 0.25, 0.25)).total_bits == 0
    with pytest.raises(InvalidInputError):
        analyze(SiftedSummary(0, 100, 0.1, 0.1))
    with pytest.raises(InvalidInputError):
        SiftedSummary(10, 10, 0.6, 0.1)


@given(st.integers(1, 10**6), st.integers(1, 10**6), rates, rates)
def test_reports_nonnegative(ne, nt, ee, et):
    rep = analyze(SiftedSummary(ne, nt, ee, et))
    for b in (rep.energy, rep.time):
        assert b.rate_fraction >= 0
        assert b.secure_bits >= 0
        assert b.secure_bits <= b.sifted


def test_one_bstep_tolerates_more_than_eleven_percent():
    sec = SecurityParams(f_ec=1.0)
    assert key_rate_one_way(1.0, 0.115, 0.115, sec) == 0.0
    assert key_rate_bstep(0.115, 0.115, sec) > 0.0
    lo, hi = 0.11, 0.3
    for _ in range(60):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if key_rate_bstep(mid, mid, sec) > 0 else (lo, mid)
    assert lo > 0.11


def test_rate_curve():
    rows = simulate_rate_curve(2500, [0.0, 0.05, 0.1, 0.15, 0.2])
    assert rows[0][1] == pytest.approx(0.2794, rel=1e-3)
    values = [r for _, r in rows]
    assert all(a >= b for a, b in zip(values, values[1:]))
    with pytest.raises(InvalidInputError):
        simulate_rate_curve(2500, [0.6])
