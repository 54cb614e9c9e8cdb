"""End-to-end Monte-Carlo of entanglement swapping between two pair sources.

Every double-pulse window runs through emission, the two fibre links, the
Bell-state measurement and, when the station heralds ``|Psi->``, the local
analysis of both idler photons.

Windows are simulated in fixed-size chunks, each with its own random stream
derived from ``(master_seed, stream, grid point, chunk)``. Channel drift is
precomputed sequentially on its own streams. Results therefore do not depend
on how many worker processes share the chunks.

Windows holding at most one pair per source are handled with array
operations. Windows with multi-pair emission or extra noise photons go
through a per-window path with the same physics.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import bsm
from .bsm import DetectorParams, swap_tables
from .channel import ChannelParams, simulate_link_pair, transmittance
from .errors import ConfigError, InvalidInputError
from .finite_key import SiftedSummary
from .fringe import FringePoint
from .source import (
    EMISSION_MODES,
    POISSON,
    SourceParams,
    emission_from_count,
    heralded_pair_state,
    sample_pair_counts,
)
from .timebin import SQRT2_INV, TimeBinState

CHUNK_WINDOWS = 1 << 16

# spawn-key tags of the independent random streams
STREAM_CHANNEL = 1
STREAM_FRINGE = 2
STREAM_QKD = 3

TIME, ENERGY = 0, 1
BASIS_NAMES = ("time", "energy")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a simulation run depends on.

    ``bob_frame_phase`` is the offset between Bob's analyser phase reference
    and Alice's. With the default of pi, a ``|Psi->`` herald leaves the idlers
    in ``|Psi+>`` in the analysis frame: anticorrelated in the time basis and
    correlated in the energy basis at equal phases.

    ``seconds_per_window`` sets the wall-clock time a window stands for, which
    drives the fibre drift; ``None`` means one repetition period.
    """

    source_a: SourceParams = field(default_factory=SourceParams)
    source_b: SourceParams = field(default_factory=SourceParams)
    channel_a: ChannelParams = field(default_factory=lambda: ChannelParams(length_km=14.7))
    channel_b: ChannelParams = field(default_factory=lambda: ChannelParams(length_km=10.6))
    eve: DetectorParams = field(default_factory=DetectorParams)
    alice: DetectorParams = field(default_factory=DetectorParams)
    bob: DetectorParams = field(default_factory=DetectorParams)
    windows: int = 1_000_000
    master_seed: int = 0
    p_time_alice: float = 0.5
    p_time_bob: float = 0.5
    emission: str = POISSON
    purity: float = 0.994
    seconds_per_window: Optional[float] = None
    drift_step_s: float = 1.0
    bob_frame_phase: float = math.pi

    def __post_init__(self):
        if self.windows <= 0:
            raise ConfigError("windows", "must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be an unsigned 64-bit integer")
        for name in ("p_time_alice", "p_time_bob", "purity"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(name, "must lie in [0, 1]")
        if self.emission not in EMISSION_MODES:
            raise ConfigError("emission", f"must be one of {EMISSION_MODES}")
        if self.seconds_per_window is not None and not self.seconds_per_window > 0:
            raise ConfigError("seconds_per_window", "must be positive")
        if not self.drift_step_s > 0:
            raise ConfigError("drift_step_s", "must be positive")
        for name in ("alice", "bob"):
            if getattr(self, name).deadtime_windows:
                raise ConfigError(f"{name}.deadtime_windows", "local dead time is not modelled")
        if self.emission != POISSON:
            for name in ("source_a", "source_b"):
                if getattr(self, name).noise_single_rate:
                    raise ConfigError(
                        f"{name}.noise_single_rate",
                        "noise photons need emission='poisson'",
                    )

    @property
    def window_seconds(self) -> float:
        if self.seconds_per_window is not None:
            return self.seconds_per_window
        return 1.0 / self.source_a.repetition_rate


@dataclass(frozen=True)
class SiftedRecord:
    window_index: int
    basis: str
    bit_A: int
    bit_B: int


@dataclass(frozen=True)
class SessionSummary:
    windows: int
    heralds: int
    n_time: int
    n_energy: int
    errors_time: int
    errors_energy: int

    @property
    def e_b_time(self) -> float:
        return self.errors_time / self.n_time if self.n_time else 0.0

    @property
    def e_b_energy(self) -> float:
        return self.errors_energy / self.n_energy if self.n_energy else 0.0

    @property
    def Q(self) -> float:
        """Sifted bits per simulated window."""
        return (self.n_time + self.n_energy) / self.windows

    def to_sifted_summary(self) -> SiftedSummary:
        n = self.n_time + self.n_energy
        return SiftedSummary(
            n_energy=self.n_energy,
            n_time=self.n_time,
            e_b_energy=self.e_b_energy,
            e_b_time=self.e_b_time,
            e_b_total=(self.errors_time + self.errors_energy) / n if n else 0.0,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(e_b_time=self.e_b_time, e_b_energy=self.e_b_energy, Q=self.Q)
        return d


# ---------------------------------------------------------------------------
# analysis settings


@dataclass(frozen=True)
class _Analysis:
    """Local measurement settings for a batch of windows.

    ``phi_a``/``phi_b`` are energy-basis phases in the analysis frame (Bob's
    frame offset still to be added). ``p_time_*`` of ``None`` means the
    energy basis is always used (fringe scans).
    """

    phi_a: float = 0.0
    phi_b: float = 0.0
    p_time_a: Optional[float] = None
    p_time_b: Optional[float] = None


def _projectors(basis: np.ndarray, phase: float) -> np.ndarray:
    """Outcome kets, shape ``(n, 2 components, 2 outcomes)``."""
    n = len(basis)
    out = np.empty((n, 2, 2), dtype=complex)
    out[:] = np.eye(2)
    e = np.array([[1.0, 1.0], [np.exp(1j * phase), -np.exp(1j * phase)]]) * SQRT2_INV
    out[basis == ENERGY] = e
    return out


def _single_projectors(basis: int, phase: float) -> np.ndarray:
    return _projectors(np.array([basis]), phase)[0]


def _choose_bases(p_time: Optional[float], n: int, rng: np.random.Generator) -> np.ndarray:
    if p_time is None:
        return np.full(n, ENERGY, dtype=np.int8)
    return np.where(rng.random(n) < p_time, TIME, ENERGY).astype(np.int8)


# ---------------------------------------------------------------------------
# per-window path for multi-photon windows


@dataclass
class _IdlerContext:
    """Idler photons of one window after the station has acted.

    ``joint`` is the state of the idler pair entangled by interference, or
    ``None``; ``joint_present`` flags whether each of its two idlers exists
    (a noise photon carries no idler). ``singles_*`` are single-idler states.
    """

    joint: Optional[np.ndarray] = None
    joint_present: tuple[bool, bool] = (False, False)
    singles_a: list = field(default_factory=list)
    singles_b: list = field(default_factory=list)


_KET = (np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex))
_DEFINITE = {b: np.outer(_KET[b - 1], _KET[b - 1]) for b in (1, 2)}


class _TableCache:
    """Pair states and herald tables shared by the windows of one chunk.

    A photon's pair state is keyed ``"c"`` for the coherent pair of its source
    or by the bin of a definite-bin contaminant or noise photon.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.coherent = (
            heralded_pair_state(cfg.source_a).matrix(),
            heralded_pair_state(cfg.source_b).matrix(),
        )
        self.tables: dict = {}
        self.marginals: dict = {}

    def pair(self, side: int, key) -> np.ndarray:
        return self.coherent[side] if key == "c" else _DEFINITE[key]

    def interference(self, key_a, key_b) -> bsm.HeraldTable:
        k = (key_a, key_b)
        if k not in self.tables:
            self.tables[k] = swap_tables(_state(self.pair(0, key_a)), _state(self.pair(1, key_b)))[0]
        return self.tables[k]


    def collapse(self, side: int, key, rng) -> tuple[int, np.ndarray]:
        """Measure the signal bin of a pair; returns (bin, idler state)."""
        k = (side, key)
        if k not in self.marginals:
            pair = self.pair(side, key)
            p1 = float(np.vdot(pair[0], pair[0]).real)
            idlers = tuple(
                row / np.linalg.norm(row) if np.linalg.norm(row) > 0 else row for row in pair
            )
            self.marginals[k] = (p1, idlers)
        p1, idlers = self.marginals[k]
        b = 1 if rng.random() < p1 else 2
        return b, idlers[b - 1]


def _state(pair_matrix: np.ndarray) -> TimeBinState:
    return TimeBinState.from_amplitudes(pair_matrix.reshape(4))


def _side_photons(k: int, window: int, rng, noise: bool) -> list:
    """Pair-state keys of one side's photons: list of (key, has_idler)."""
    rec = emission_from_count(window, k, rng)
    out = [("c" if p.coherent else p.signal_bin, True) for p in rec.pairs]
    if noise:
        out.append((int(rng.integers(1, 3)), False))
    return out


def _pick(probs: np.ndarray, rng) -> int:
    return min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), len(probs) - 1)


def _station_complex(cfg, cache, ka, kb, noise_a, noise_b, zeta, dark, window, rng, ta, tb):
    sides = (_side_photons(ka, window, rng, noise_a), _side_photons(kb, window, rng, noise_b))
    surv = (
        [rng.random() < ta for _ in sides[0]],
        [rng.random() < tb for _ in sides[1]],
    )
    ctx = _IdlerContext()
    photon_slots: list[int] = []
    ia = [i for i, s in enumerate(surv[0]) if s]
    ib = [i for i, s in enumerate(surv[1]) if s]
    used: tuple[set, set] = (set(), set())
    if len(ia) == 1 and len(ib) == 1 and rng.random() < zeta:
        (key_a, has_a), (key_b, has_b) = sides[0][ia[0]], sides[1][ib[0]]
        table = cache.interference(key_a, key_b)
        k = _pick(table.probs, rng)
        photon_slots.extend(int(s) for s in table.slots[k])
        ctx.joint = table.ancilla[k]
        ctx.joint_present = (has_a, has_b)
        used[0].add(ia[0])
        used[1].add(ib[0])
    for side, singles in ((0, ctx.singles_a), (1, ctx.singles_b)):
        for i, (key, has_idler) in enumerate(sides[side]):
            if i in used[side]:
                continue
            b, idler = cache.collapse(side, key, rng)
            if surv[side][i]:
                photon_slots.extend(bsm.route_independently([b], rng))
            if has_idler:
                singles.append(idler)
    mask = bsm.register_clicks(photon_slots, cfg.eve, rng, dark=dark)
    return mask, ctx


def _local_complex(ctx: _IdlerContext, basis_a, basis_b, phase_a, phase_b, cfg, rng):
    """Click results of both nodes for one window; returns (slot_a, slot_b), -1 if inconclusive."""
    proj_a = _single_projectors(basis_a, phase_a)
    proj_b = _single_projectors(basis_b, phase_b)
    hits_a: set[int] = set()
    hits_b: set[int] = set()
    if ctx.joint is not None:
        amp = proj_a.conj().T @ ctx.joint.reshape(2, 2) @ proj_b.conj()
        p = (np.abs(amp) ** 2).ravel()
        o = _pick(p / p.sum(), rng)
        oa, ob = divmod(o, 2)
        if ctx.joint_present[0] and rng.random() < cfg.alice.efficiency:
            hits_a.add(oa)
        if ctx.joint_present[1] and rng.random() < cfg.bob.efficiency:
            hits_b.add(ob)
    for singles, proj, hits, det in (
        (ctx.singles_a, proj_a, hits_a, cfg.alice),
        (ctx.singles_b, proj_b, hits_b, cfg.bob),
    ):
        for s in singles:
            p0 = abs(np.vdot(proj[:, 0], s)) ** 2
            o = 0 if rng.random() < p0 else 1
            if rng.random() < det.efficiency:
                hits.add(o)
    out = []
    for hits, det in ((hits_a, cfg.alice), (hits_b, cfg.bob)):
        for o, u in enumerate(rng.random(2)):
            if u < det.dark_count_prob_per_window:
                hits.add(o)
        out.append(next(iter(hits)) if len(hits) == 1 else -1)
    return out[0], out[1]


# ---------------------------------------------------------------------------
# chunk simulation


@dataclass
class ChunkResult:
    heralds: int
    window_index: np.ndarray  # heralded windows with both nodes conclusive
    basis_a: np.ndarray
    basis_b: np.ndarray
    slot_a: np.ndarray
    slot_b: np.ndarray


def _apply_deadtime(masks: np.ndarray, deadtime: int) -> np.ndarray:
    """Non-paralysable dead time per detector, counted in windows."""
    if deadtime <= 0:
        return masks
    masks = masks.copy()
    for det_bits in (0b0011, 0b1100):
        dead_until = -1
        for w in np.flatnonzero(masks & det_bits):
            if w <= dead_until:
                masks[w] &= ~det_bits
            else:
                dead_until = w + deadtime
    return masks


def simulate_chunk(
    cfg: ExperimentConfig,
    zeta: np.ndarray,
    analysis: _Analysis,
    rng: np.random.Generator,
    first_window: int = 0,
    vectorized: bool = True,
) -> ChunkResult:
    """Simulate ``len(zeta)`` consecutive windows.

    ``zeta`` holds the effective mode overlap of each window. With
    ``vectorized=False`` every window takes the per-window path, which is
    slower but useful to cross-check the array path.
    """
    n = len(zeta)
    ta, tb = transmittance(cfg.channel_a), transmittance(cfg.channel_b)
    ka = sample_pair_counts(cfg.source_a, n, rng, cfg.emission)
    kb = sample_pair_counts(cfg.source_b, n, rng, cfg.emission)
    noise_a = rng.random(n) < cfg.source_a.noise_single_rate
    noise_b = rng.random(n) < cfg.source_b.noise_single_rate
    pd = cfg.eve.dark_count_prob_per_window
    dark = (rng.random((n, 4)) < pd) @ (1 << np.arange(4)) if pd > 0 else np.zeros(n, dtype=np.int64)

    simple = (ka <= 1) & (kb <= 1) & ~noise_a & ~noise_b
    if not vectorized:
        simple[:] = False
    masks = np.zeros(n, dtype=np.int64)

    # array path: at most one (coherent) pair per source
    s_idx = np.flatnonzero(simple)
    ns = len(s_idx)
    itab, dtab = swap_tables(heralded_pair_state(cfg.source_a), heralded_pair_state(cfg.source_b))
    surv = np.column_stack([
        (ka[s_idx] == 1) & (rng.random(ns) < ta),
        (kb[s_idx] == 1) & (rng.random(ns) < tb),
    ])
    interfere = surv[:, 0] & surv[:, 1] & (rng.random(ns) < zeta[s_idx])
    oi = itab.sample(rng, ns)
    od = dtab.sample(rng, ns)
    photon_slots = np.where(interfere[:, None], itab.slots[oi], dtab.slots[od])
    idler = np.where(interfere[:, None], itab.ancilla[oi], dtab.ancilla[od])
    present = surv.copy()
    present[interfere] = True
    detected = present & (rng.random((ns, 2)) < cfg.eve.efficiency)
    bits = np.where(detected, 1 << photon_slots, 0)
    masks[s_idx] = bits[:, 0] | bits[:, 1] | dark[s_idx]

    # per-window path
    contexts: dict[int, _IdlerContext] = {}
    cache = _TableCache(cfg)
    for w in np.flatnonzero(~simple):
        masks[w], contexts[int(w)] = _station_complex(
            cfg, cache, int(ka[w]), int(kb[w]), bool(noise_a[w]), bool(noise_b[w]),
            float(zeta[w]), int(dark[w]), first_window + int(w), rng, ta, tb,
        )

    masks = _apply_deadtime(masks, cfg.eve.deadtime_windows)
    herald = (masks == bsm.PSI_MINUS_MASKS[0]) | (masks == bsm.PSI_MINUS_MASKS[1])

    # local analysis of heralded windows
    h_idx = np.flatnonzero(herald)
    nh = len(h_idx)
    basis_a = _choose_bases(analysis.p_time_a, nh, rng)
    basis_b = _choose_bases(analysis.p_time_b, nh, rng)
    phase_a = analysis.phi_a
    phase_b = analysis.phi_b + cfg.bob_frame_phase
    slot_a = np.full(nh, -1, dtype=np.int64)
    slot_b = np.full(nh, -1, dtype=np.int64)

    hs = simple[h_idx]
    pos = np.flatnonzero(hs)
    if len(pos):
        w = h_idx[pos]
        row = np.searchsorted(s_idx, w)
        psi = idler[row].reshape(-1, 2, 2)
        pa = _projectors(basis_a[pos], phase_a)
        pb = _projectors(basis_b[pos], phase_b)
        amp = np.einsum("nxa,nxy,nyb->nab", pa.conj(), psi, pb.conj())
        prob = (np.abs(amp) ** 2).reshape(-1, 4)
        prob /= prob.sum(axis=1, keepdims=True)
        u = rng.random(len(pos))
        joint = (u[:, None] > np.cumsum(prob, axis=1)).sum(axis=1).clip(max=3)
        oa, ob = np.divmod(joint, 2)
        hit_a = (ka[w] == 1) & (rng.random(len(pos)) < cfg.alice.efficiency)
        hit_b = (kb[w] == 1) & (rng.random(len(pos)) < cfg.bob.efficiency)
        slot_a[pos] = _resolve(oa, hit_a, cfg.alice.dark_count_prob_per_window, rng)
        slot_b[pos] = _resolve(ob, hit_b, cfg.bob.dark_count_prob_per_window, rng)
    for i in np.flatnonzero(~hs):
        slot_a[i], slot_b[i] = _local_complex(
            contexts[int(h_idx[i])], int(basis_a[i]), int(basis_b[i]), phase_a, phase_b, cfg, rng
        )

    ok = (slot_a >= 0) & (slot_b >= 0)
    return ChunkResult(
        heralds=nh,
        window_index=h_idx[ok] + first_window,
        basis_a=basis_a[ok],
        basis_b=basis_b[ok],
        slot_a=slot_a[ok],
        slot_b=slot_b[ok],
    )


def _resolve(outcome, hit, p_dark, rng) -> np.ndarray:
    """Threshold-detector result of one node: the single clicked slot or -1."""
    n = len(outcome)
    clicks = np.where(hit, 1 << outcome, 0)
    if p_dark > 0:
        clicks = clicks | ((rng.random((n, 2)) < p_dark) @ np.array([1, 2]))
    return np.select([clicks == 1, clicks == 2], [0, 1], default=-1)


# ---------------------------------------------------------------------------
# orchestration


def _overlap_timeline(cfg: ExperimentConfig, total_windows: int) -> np.ndarray:
    duration = total_windows * cfg.window_seconds
    rng_a = np.random.default_rng(
        np.random.SeedSequence(cfg.master_seed, spawn_key=(STREAM_CHANNEL, 0))
    )
    rng_b = np.random.default_rng(
        np.random.SeedSequence(cfg.master_seed, spawn_key=(STREAM_CHANNEL, 1))
    )
    return simulate_link_pair(
        cfg.channel_a, cfg.channel_b, duration, cfg.drift_step_s, rng_a, rng_b
    )


def _zeta_for(cfg, timeline, start, n) -> np.ndarray:
    t = (start + np.arange(n)) * cfg.window_seconds
    step = np.minimum((t // cfg.drift_step_s).astype(np.int64), len(timeline) - 1)
    return cfg.purity * timeline[step]


def _chunk_job(args) -> ChunkResult:
    cfg, zeta, analysis, key, first_window = args
    rng = np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=key))
    return simulate_chunk(cfg, zeta, analysis, rng, first_window)


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get("SWAPQKD_WORKERS", "1"))
    if workers < 1:
        raise InvalidInputError("workers must be >= 1")
    return workers


def _run_jobs(jobs: list, workers: int) -> list[ChunkResult]:
    if workers == 1 or len(jobs) == 1:
        return [_chunk_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chunk_job, jobs))


def _jobs(cfg, timeline, analysis, stream, grid_index, offset):
    jobs = []
    for c, start in enumerate(range(0, cfg.windows, CHUNK_WINDOWS)):
        n = min(CHUNK_WINDOWS, cfg.windows - start)
        zeta = _zeta_for(cfg, timeline, offset + start, n)
        jobs.append((cfg, zeta, analysis, (stream, grid_index, c), start))
    return jobs


def run_fringe_scan(
    config: ExperimentConfig,
    phi_b: float,
    phi_a_grid: Sequence[float],
    workers: Optional[int] = None,
) -> list[FringePoint]:
    """Four-fold ``(+, +)`` coincidences versus Alice's analyser phase.

    Each grid point simulates ``config.windows`` windows; the points follow
    one another in simulated time.
    """
    grid = [float(p) for p in phi_a_grid]
    if not grid:
        raise ConfigError("fringe.phi_a_grid", "must not be empty")
    workers = resolve_workers(workers)
    timeline = _overlap_timeline(config, config.windows * len(grid))
    jobs, owners = [], []
    for g, phi_a in enumerate(grid):
        analysis = _Analysis(phi_a=phi_a, phi_b=phi_b)
        batch = _jobs(config, timeline, analysis, STREAM_FRINGE, g, g * config.windows)
        jobs.extend(batch)
        owners.extend([g] * len(batch))
    results = _run_jobs(jobs, workers)
    counts = [0] * len(grid)
    heralds = [0] * len(grid)
    for g, r in zip(owners, results):
        counts[g] += int(np.count_nonzero((r.slot_a == 0) & (r.slot_b == 0)))
        heralds[g] += r.heralds
    return [FringePoint(phi, c, h) for phi, c, h in zip(grid, counts, heralds)]


def run_qkd_session(
    config: ExperimentConfig, workers: Optional[int] = None
) -> tuple[list[SiftedRecord], SessionSummary]:
    """Sifted key records and per-basis error statistics of one session.

    Time basis: bit = bin - 1, Bob's bit flipped. Energy basis (phase 0 on
    both sides): bit 0 for the ``+`` outcome, no flip.
    """
    workers = resolve_workers(workers)
    timeline = _overlap_timeline(config, config.windows)
    analysis = _Analysis(p_time_a=config.p_time_alice, p_time_b=config.p_time_bob)
    results = _run_jobs(_jobs(config, timeline, analysis, STREAM_QKD, 0, 0), workers)

    records: list[SiftedRecord] = []
    n = {TIME: 0, ENERGY: 0}
    err = {TIME: 0, ENERGY: 0}
    heralds = 0
    for r in results:
        heralds += r.heralds
        match = r.basis_a == r.basis_b
        bit_a = r.slot_a[match]
        bit_b = np.where(r.basis_b[match] == TIME, 1 - r.slot_b[match], r.slot_b[match])
        for w, b, x, y in zip(r.window_index[match], r.basis_a[match], bit_a, bit_b):
            records.append(SiftedRecord(int(w), BASIS_NAMES[b], int(x), int(y)))
            n[int(b)] += 1
            err[int(b)] += int(x != y)
    summary = SessionSummary(
        windows=config.windows,
        heralds=heralds,
        n_time=n[TIME],
        n_energy=n[ENERGY],
        errors_time=err[TIME],
        errors_energy=err[ENERGY],
    )
    return records, summary
