"""Pulsed time-bin entangled photon-pair source with Poissonian pair statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .timebin import TimeBinState

# Pair-count statistics used by the experiment driver.
POISSON = "poisson"
HERALDED = "heralded"  # Poisson conditioned on at least one pair
SINGLE = "single"  # exactly one coherent pair per window
EMISSION_MODES = (POISSON, HERALDED, SINGLE)


@dataclass(frozen=True)
class SourceParams:
    """Parameters of one pair source.

    Attributes:
        mu: Mean number of pairs per double pulse.
        pump_phase_delta: Relative phase of the two pump pulses, radians.
        repetition_rate: Double-pulse repetition rate in Hz.
        noise_single_rate: Probability per window of an extra uncorrelated
            signal photon (folds in residual phonon-induced singles).
    """

    mu: float = 0.03
    pump_phase_delta: float = 0.0
    repetition_rate: float = 300e6
    noise_single_rate: float = 0.0

    def __post_init__(self):
        if not self.mu >= 0:
            raise InvalidInputError(f"mu must be >= 0, got {self.mu}")
        if not self.repetition_rate > 0:
            raise InvalidInputError("repetition_rate must be positive")
        if not 0 <= self.noise_single_rate <= 1:
            raise InvalidInputError("noise_single_rate must lie in [0, 1]")


@dataclass(frozen=True)
class PairRecord:
    signal_bin: int
    idler_bin: int
    coherent: bool

    def state(self, params: SourceParams) -> TimeBinState:
        """Signal-idler state of this pair (signal first, idler second)."""
        if self.coherent:
            return heralded_pair_state(params)
        return TimeBinState.product(_ket(self.signal_bin), _ket(self.idler_bin))


@dataclass(frozen=True)
class EmissionRecord:
    window_index: int
    pairs: tuple[PairRecord, ...] = field(default_factory=tuple)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)


def _ket(b: int) -> np.ndarray:
    return np.array([1.0, 0.0]) if b == 1 else np.array([0.0, 1.0])


def heralded_pair_state(params: SourceParams) -> TimeBinState:
    """``(|1,1> + e^{i delta} |2,2>)/sqrt(2)`` for a single emitted pair."""
    amp = 1.0 / math.sqrt(2.0)
    return TimeBinState(
        np.array([amp, 0, 0, amp * np.exp(1j * params.pump_phase_delta)], dtype=complex)
    )


def window_rng(master_seed: int, source_id: int, window_index: int) -> np.random.Generator:
    """Random stream for one window of one source, independent of call order."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(source_id, window_index))
    return np.random.default_rng(seq)


def sample_emission(
    params: SourceParams, window_index: int, rng: np.random.Generator
) -> EmissionRecord:
    """Draw the photon pairs emitted in one double-pulse window.

    The first pair is the coherent time-bin superposition. Further pairs are
    treated as incoherent contaminants in a uniformly random bin.
    """
    if params.mu < 0:
        raise InvalidInputError(f"mu must be >= 0, got {params.mu}")
    k = int(rng.poisson(params.mu))
    return emission_from_count(window_index, k, rng)


def emission_from_count(window_index: int, k: int, rng: np.random.Generator) -> EmissionRecord:
    """Build the record for ``k`` pairs; only the first one is coherent.

    The bin label of the coherent pair is nominal, its state spans both bins.
    """
    pairs = []
    for j in range(k):
        b = int(rng.integers(1, 3))
        pairs.append(PairRecord(b, b, coherent=(j == 0)))
    return EmissionRecord(window_index, tuple(pairs))


def sample_pair_counts(
    params: SourceParams, n: int, rng: np.random.Generator, mode: str = POISSON
) -> np.ndarray:
    """Vectorised pair counts for ``n`` consecutive windows."""
    if mode == POISSON:
        return rng.poisson(params.mu, size=n)
    if mode == SINGLE:
        return np.ones(n, dtype=np.int64)
    if mode == HERALDED:
        if params.mu <= 0:
            raise InvalidInputError("heralded emission needs mu > 0")
        return zero_truncated_poisson(params.mu, n, rng)
    raise InvalidInputError(f"unknown emission mode {mode!r}")


def zero_truncated_poisson(mu: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Poisson(mu) conditioned on k >= 1, by inverse-CDF sampling."""
    p0 = math.exp(-mu)
    # u uniform on (p0, 1] maps through the Poisson CDF to k >= 1
    u = p0 + (1.0 - p0) * rng.random(n)
    kmax = 1
    while True:
        cdf = _poisson_cdf(mu, kmax)
        if cdf[-1] >= 1.0 - 1e-16:
            break
        kmax *= 2
    return np.searchsorted(cdf, u, side="left").astype(np.int64).clip(1, kmax)


def _poisson_cdf(mu: float, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    logp = k * math.log(mu) - mu - np.array([math.lgamma(x + 1) for x in k])
    return np.cumsum(np.exp(logp))
