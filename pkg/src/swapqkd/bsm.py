"""Bell-state measurement at the central station.

The two signal photons meet on a 50:50 beam splitter whose outputs go to the
threshold detectors D1 and D2. Each detector resolves the early/late bin, so a
click is identified by a *slot* ``(detector, bin)``. Slots are indexed

    0: (D1, 1)   1: (D1, 2)   2: (D2, 1)   3: (D2, 2)

Partial distinguishability with overlap ``zeta`` is a convex mixture of the
bosonic (``zeta = 1``) and the independent-routing (``zeta = 0``) statistics.
"""
from __future__ import annotations

import enum
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .timebin import NORM_TOL, TimeBinState

# rows: detector (D1, D2); columns: input port (A, B)
BS_UNITARY = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)

SLOTS = ((1, 1), (1, 2), (2, 1), (2, 2))
SLOT_INDEX = {s: i for i, s in enumerate(SLOTS)}

ClickPattern = FrozenSet[tuple[int, int]]


def slot(detector: int, time_bin: int) -> int:
    return 2 * (detector - 1) + (time_bin - 1)


def pattern_from_mask(mask: int) -> ClickPattern:
    return frozenset(SLOTS[i] for i in range(4) if mask >> i & 1)


def mask_from_pattern(pattern: Iterable[tuple[int, int]]) -> int:
    m = 0
    for s in pattern:
        m |= 1 << SLOT_INDEX[s]
    return m


class BsmOutcome(enum.Enum):
    PSI_MINUS = "psi-"
    PSI_PLUS = "psi+"
    INCONCLUSIVE = "inconclusive"


# Two clicks, different detectors, different bins.
PSI_MINUS_MASKS = (0b1001, 0b0110)
# Two clicks, same detector, different bins.
PSI_PLUS_MASKS = (0b0011, 0b1100)


@dataclass(frozen=True)
class DetectorParams:
    """Threshold detector model.

    The numeric defaults are assumptions; none are given for the real devices.
    """

    efficiency: float = 0.5
    dark_count_prob_per_window: float = 0.0
    deadtime_windows: int = 0

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise InvalidInputError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not 0 <= self.dark_count_prob_per_window < 1:
            raise InvalidInputError("dark_count_prob_per_window must lie in [0, 1)")
        if self.deadtime_windows < 0:
            raise InvalidInputError("deadtime_windows must be >= 0")


def classify_mask(mask: int) -> BsmOutcome:
    if mask in PSI_MINUS_MASKS:
        return BsmOutcome.PSI_MINUS
    if mask in PSI_PLUS_MASKS:
        return BsmOutcome.PSI_PLUS
    return BsmOutcome.INCONCLUSIVE


def classify(pattern: ClickPattern) -> BsmOutcome:
    return classify_mask(mask_from_pattern(pattern))


# ---------------------------------------------------------------------------
# Exact two-photon statistics


@dataclass(frozen=True)
class HeraldTable:
    """Outcome table of the two signal photons, with the conditional ancilla state.

    ``slots[k]`` holds the two (sorted) photon slots of outcome ``k``; equal
    entries mean both photons left through the same slot. ``ancilla[k]`` is
    the normalised state of whatever the signals were entangled with (the
    idler pair in the swapping experiment), empty when there is none.
    """

    slots: np.ndarray  # (K, 2) int
    probs: np.ndarray  # (K,)
    ancilla: np.ndarray  # (K, d) complex

    def sample(self, rng: np.random.Generator, size=None):
        return rng.choice(len(self.probs), size=size, p=self.probs)


def _ordered_amplitudes(psi: np.ndarray) -> np.ndarray:
    """Output amplitudes with photons kept labelled by their input port.

    ``psi`` has shape ``(2, 2, d)`` indexed by (bin of A, bin of B, ancilla).
    Returns shape ``(4, 4, d)`` indexed by (slot of A's photon, slot of B's
    photon, ancilla).
    """
    out = np.zeros((4, 4, psi.shape[2]), dtype=complex)
    for (da, xa), (db, xb) in itertools.product(SLOTS, SLOTS):
        coeff = BS_UNITARY[da - 1, 0] * BS_UNITARY[db - 1, 1]
        out[slot(da, xa), slot(db, xb)] = coeff * psi[xa - 1, xb - 1]
    return out


def _build_table(entries: dict) -> HeraldTable:
    slots, probs, anc = [], [], []
    for key in sorted(entries):
        amp = entries[key]
        p = float(np.vdot(amp, amp).real)
        if p <= 1e-15:
            continue
        slots.append(key)
        probs.append(p)
        anc.append(amp / math.sqrt(p))
    probs = np.asarray(probs)
    probs = probs / probs.sum()
    return HeraldTable(np.asarray(slots, dtype=np.int64), probs, np.asarray(anc))


def indistinguishable_table(psi: np.ndarray) -> HeraldTable:
    """Bosonic outcome table for fully overlapping photons."""
    amp = _ordered_amplitudes(psi)
    entries = {}
    for m in range(4):
        entries[(m, m)] = math.sqrt(2.0) * amp[m, m]
        for n in range(m + 1, 4):
            entries[(m, n)] = amp[m, n] + amp[n, m]
    return _build_table(entries)


def distinguishable_table(psi: np.ndarray) -> HeraldTable:
    """Outcome table when each photon routes independently.

    Outcomes stay labelled by input port, ``slots[k] = (slot of A's photon,
    slot of B's photon)``, since which-path information is available in
    principle; the ancilla collapses accordingly.
    """
    amp = _ordered_amplitudes(psi)
    return _build_table({(m, n): amp[m, n] for m in range(4) for n in range(4)})


def swap_tables(pair_a: TimeBinState, pair_b: TimeBinState) -> tuple[HeraldTable, HeraldTable]:
    """Herald tables for two signal-idler pairs meeting at the beam splitter.

    Each pair state is ordered (signal, idler). The ancilla of the returned
    tables is the idler pair in order (idler A, idler B).
    """
    a = pair_a.matrix()  # [signal, idler]
    b = pair_b.matrix()
    psi = np.einsum("ai,bj->abij", a, b).reshape(2, 2, 4)
    return indistinguishable_table(psi), distinguishable_table(psi)


def _check_inputs(state: TimeBinState, zeta: float) -> None:
    if abs(state.norm() - 1.0) > NORM_TOL:
        raise InvalidInputError("signal state is not normalized")
    if not 0.0 <= zeta <= 1.0:
        raise InvalidInputError(f"zeta must lie in [0, 1], got {zeta}")


def photon_slot_distribution(
    joint_signal_state: TimeBinState, zeta: float
) -> dict[tuple[int, int], float]:
    """Probability of each unordered pair of photon slots."""
    _check_inputs(joint_signal_state, zeta)
    psi = joint_signal_state.matrix().reshape(2, 2, 1)
    out: dict[tuple[int, int], float] = defaultdict(float)
    for weight, table in (
        (zeta, indistinguishable_table(psi)),
        (1.0 - zeta, distinguishable_table(psi)),
    ):
        if weight == 0:
            continue
        for (m, n), p in zip(table.slots, table.probs):
            out[tuple(sorted((int(m), int(n))))] += weight * p
    return dict(out)


def click_distribution(joint_signal_state: TimeBinState, zeta: float) -> dict[ClickPattern, float]:
    """Click-pattern probabilities for one signal photon from each side.

    Detectors are ideal here; loss and dark counts enter in ``sample_clicks``.
    """
    out: dict[ClickPattern, float] = defaultdict(float)
    for (m, n), p in photon_slot_distribution(joint_signal_state, zeta).items():
        out[frozenset((SLOTS[m], SLOTS[n]))] += p
    return dict(out)


def fock_click_distribution(joint_signal_state: TimeBinState, zeta: float) -> dict[ClickPattern, float]:
    """Second-quantised brute-force evaluation of ``click_distribution``.

    Expands the creation operators of both inputs through the beam splitter,
    collects Fock amplitudes with their ``sqrt(n!)`` factors and sums
    probabilities. Distinguishable photons carry an extra orthogonal label.
    Kept independent of the first-quantised path as a cross-check.
    """
    _check_inputs(joint_signal_state, zeta)
    psi = joint_signal_state.matrix()

    def expand(labelled: bool) -> dict[ClickPattern, float]:
        fock: dict[tuple, complex] = defaultdict(complex)
        for xa in (1, 2):
            for xb in (1, 2):
                c0 = psi[xa - 1, xb - 1]
                if c0 == 0:
                    continue
                for da in (1, 2):
                    for db in (1, 2):
                        mode_a = (da, xa, "A" if labelled else "")
                        mode_b = (db, xb, "B" if labelled else "")
                        coeff = c0 * BS_UNITARY[da - 1, 0] * BS_UNITARY[db - 1, 1]
                        fock[tuple(sorted((mode_a, mode_b)))] += coeff
        probs: dict[ClickPattern, float] = defaultdict(float)
        for modes, coeff in fock.items():
            mult = math.prod(math.factorial(modes.count(m)) for m in set(modes))
            pattern = frozenset((d, x) for d, x, _ in modes)
            probs[pattern] += abs(coeff) ** 2 * mult
        return probs

    out: dict[ClickPattern, float] = defaultdict(float)
    for weight, labelled in ((zeta, False), (1.0 - zeta, True)):
        if weight:
            for k, v in expand(labelled).items():
                out[k] += weight * v
    return {k: v for k, v in out.items() if v > 1e-15}


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class Arrivals:
    """Signal photons reaching the station in one window.

    ``bins_a``/``bins_b`` give the time bin of each photon from either side,
    used for independent routing. When exactly one photon comes from each
    side, ``joint_state`` (if given) is their two-photon state and the
    interference statistics apply instead.
    """

    bins_a: tuple[int, ...] = ()
    bins_b: tuple[int, ...] = ()
    joint_state: Optional[TimeBinState] = None


def route_independently(bins: Sequence[int], rng: np.random.Generator) -> list[int]:
    """Each photon picks a detector at random and keeps its own bin."""
    return [slot(int(rng.integers(1, 3)), b) for b in bins]


def register_clicks(
    photon_slots: Sequence[int],
    det: DetectorParams,
    rng: np.random.Generator,
    dark: Optional[int] = None,
) -> int:
    """Efficiency thinning per photon, then dark clicks; returns a slot mask."""
    mask = 0
    for s in photon_slots:
        if rng.random() < det.efficiency:
            mask |= 1 << s
    if dark is None:
        dark = 0
        if det.dark_count_prob_per_window > 0:
            for i, u in enumerate(rng.random(4)):
                if u < det.dark_count_prob_per_window:
                    dark |= 1 << i
    return mask | dark


def sample_clicks(
    arrivals: Arrivals,
    zeta: float,
    det: DetectorParams,
    rng: np.random.Generator,
) -> ClickPattern:
    if len(arrivals.bins_a) == 1 and len(arrivals.bins_b) == 1 and arrivals.joint_state is not None:
        dist = photon_slot_distribution(arrivals.joint_state, zeta)
        keys = list(dist)
        k = rng.choice(len(keys), p=np.fromiter(dist.values(), float))
        photon_slots = list(keys[k])
    else:
        photon_slots = route_independently(arrivals.bins_a + arrivals.bins_b, rng)
    return pattern_from_mask(register_clicks(photon_slots, det, rng))
