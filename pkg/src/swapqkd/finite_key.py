"""Finite-key secure-key accounting with one two-way B step.

Each basis is treated separately: its phase error is bounded from the bit
error observed in the *other* basis plus a Serfling sampling gap, one B step
(random pairing and parity comparison) is applied, and the resulting rate per
sifted bit is multiplied by that basis' sifted count.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .errors import InvalidInputError


@dataclass(frozen=True)
class SecurityParams:
    epsilon: float = 1e-10
    f_ec: float = 1.16

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise InvalidInputError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.f_ec >= 1:
            raise InvalidInputError(f"f_ec must be >= 1, got {self.f_ec}")


@dataclass(frozen=True)
class SiftedSummary:
    n_energy: int
    n_time: int
    e_b_energy: float
    e_b_time: float
    e_b_total: Optional[float] = None

    def __post_init__(self):
        for name in ("n_energy", "n_time"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        for name in ("e_b_energy", "e_b_time"):
            v = getattr(self, name)
            if not 0 <= v <= 0.5:
                raise InvalidInputError(f"{name} must lie in [0, 1/2], got {v}")

    @property
    def total_error_rate(self) -> float:
        """Count-weighted error over both bases, unless given explicitly."""
        if self.e_b_total is not None:
            return self.e_b_total
        n = self.n_energy + self.n_time
        if n == 0:
            return 0.0
        return (self.n_energy * self.e_b_energy + self.n_time * self.e_b_time) / n


@dataclass(frozen=True)
class BasisKeyRate:
    sifted: int
    e_b: float
    gap: float
    e_p: float
    p_s: float
    e_b_prime: float
    e_p_prime: float
    rate_fraction: float
    secure_bits: int


@dataclass(frozen=True)
class KeyRateReport:
    energy: BasisKeyRate
    time: BasisKeyRate
    e_b_total: float
    security: SecurityParams
    Q: Optional[float] = None

    @property
    def total_bits(self) -> int:
        return self.energy.secure_bits + self.time.secure_bits

    def to_dict(self) -> dict:
        return {
            "energy": asdict(self.energy),
            "time": asdict(self.time),
            "e_b_total": self.e_b_total,
            "Q": self.Q,
            "security": asdict(self.security),
            "secure_bits": {
                "energy": self.energy.secure_bits,
                "time": self.time.secure_bits,
                "total": self.total_bits,
            },
        }


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError(f"binary entropy argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def serfling_gap(epsilon: float, n_obs: int, n_target: int) -> float:
    """Sampling gap between the observed bit error and the bounded phase error.

    ``n_obs`` is the size of the basis whose bit errors were observed and
    ``n_target`` that of the basis whose phase error is bounded. The log is
    natural.
    """
    if n_obs < 1 or n_target < 1:
        raise InvalidInputError("serfling_gap needs at least one bit in each basis")
    if not 0 < epsilon < 1:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    return math.sqrt(
        (n_target + 1) * math.log(1.0 / epsilon) / (2.0 * n_obs * (n_obs + n_target))
    )


def phase_error_bound(e_b_other_basis: float, gap: float) -> float:
    return min(e_b_other_basis + gap, 1.0)


def bstep_transform(e_b: float, e_p: float) -> tuple[float, float, float]:
    """Bit/phase error after one B step; returns ``(p_s, e_b', e_p')``."""
    if not (0 <= e_b <= 1 and 0 <= e_p <= 1):
        raise InvalidInputError("error rates must lie in [0, 1]")
    p_s = e_b**2 + (1.0 - e_b) ** 2
    e_b_prime = e_b**2 / p_s
    e_p_prime = 2.0 * e_p * (1.0 - e_p - e_b) / p_s
    return p_s, e_b_prime, min(max(e_p_prime, 0.0), 1.0)


def _raw_rate(e_b: float, e_p: float, f_ec: float) -> float:
    return 1.0 - f_ec * binary_entropy(e_b) - binary_entropy(e_p)


def key_rate_one_way(Q: float, e_b: float, e_p: float, sec: SecurityParams = SecurityParams()) -> float:
    return max(0.0, Q * _raw_rate(e_b, e_p, sec.f_ec))


def key_rate_bstep(e_b: float, e_p: float, sec: SecurityParams = SecurityParams(), steps: int = 1) -> float:
    """Secure fraction per sifted bit after ``steps`` B steps (one by default).

    Each B step keeps a fraction ``p_s / 2`` of the bits it is given.
    """
    kept = 1.0
    for _ in range(steps):
        p_s, e_b, e_p = bstep_transform(e_b, e_p)
        kept *= p_s / 2.0
    return max(0.0, kept * _raw_rate(e_b, e_p, sec.f_ec))


def _basis_rate(n: int, e_b: float, e_b_other: float, n_other: int, sec: SecurityParams) -> BasisKeyRate:
    gap = serfling_gap(sec.epsilon, n_obs=n_other, n_target=n)
    e_p = phase_error_bound(e_b_other, gap)
    p_s, e_b1, e_p1 = bstep_transform(e_b, e_p)
    frac = key_rate_bstep(e_b, e_p, sec)
    return BasisKeyRate(
        sifted=n,
        e_b=e_b,
        gap=gap,
        e_p=e_p,
        p_s=p_s,
        e_b_prime=e_b1,
        e_p_prime=e_p1,
        rate_fraction=frac,
        secure_bits=math.floor(frac * n),
    )


def analyze(summary: SiftedSummary, sec: SecurityParams = SecurityParams(), Q: Optional[float] = None) -> KeyRateReport:
    if summary.n_energy < 1 or summary.n_time < 1:
        raise InvalidInputError(
            "both bases need sifted bits: each phase error is estimated from the other basis"
        )
    energy = _basis_rate(summary.n_energy, summary.e_b_energy, summary.e_b_time, summary.n_time, sec)
    time = _basis_rate(summary.n_time, summary.e_b_time, summary.e_b_energy, summary.n_energy, sec)
    return KeyRateReport(energy, time, summary.total_error_rate, sec, Q)


def simulate_rate_curve(
    n_per_basis: int, e_b_grid: Sequence[float], sec: SecurityParams = SecurityParams()
) -> list[tuple[float, float]]:
    """B-step rate per sifted bit for two equal-size bases with equal error."""
    gap = serfling_gap(sec.epsilon, n_per_basis, n_per_basis)
    out = []
    for e_b in e_b_grid:
        if not 0 <= e_b < 0.5:
            raise InvalidInputError(f"grid values must lie in [0, 1/2), got {e_b}")
        out.append((float(e_b), key_rate_bstep(e_b, phase_error_bound(e_b, gap), sec)))
    return out
