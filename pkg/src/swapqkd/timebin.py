"""Two-photon time-bin states and their measurement statistics.

Basis order is ``|1,1>, |1,2>, |2,1>, |2,2>`` where the first label belongs to
photon A and the second to photon B; ``1`` is the early bin, ``2`` the late one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

NORM_TOL = 1e-12
BINS = (1, 2)
SIGNS = (+1, -1)
SQRT2_INV = 1.0 / math.sqrt(2.0)


class BellKind(enum.Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"


@dataclass(frozen=True)
class TimeBinState:
    """Pure two-photon state over the time-bin product basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = True) -> "TimeBinState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(4)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise InvalidInputError("zero state vector")
            amps = amps / norm
        return cls(amps)

    @classmethod
    def product(cls, a, b) -> "TimeBinState":
        """Product of two single-photon states, each given as 2 amplitudes."""
        return cls.from_amplitudes(np.kron(np.asarray(a, complex), np.asarray(b, complex)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def matrix(self) -> np.ndarray:
        """Amplitudes as a 2x2 array indexed ``[bin_A - 1, bin_B - 1]``."""
        return self.amplitudes.reshape(2, 2)

    def inner(self, other: "TimeBinState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class EnergyBasisSetting:
    """Phase of an analysis interferometer, in radians."""

    phase: float

    def __post_init__(self):
        if not math.isfinite(self.phase):
            raise InvalidInputError(f"phase must be finite, got {self.phase}")
        object.__setattr__(self, "phase", float(self.phase) % (2 * math.pi))


_BELL = {
    BellKind.PHI_PLUS: (1, 0, 0, 1),
    BellKind.PHI_MINUS: (1, 0, 0, -1),
    BellKind.PSI_PLUS: (0, 1, 1, 0),
    BellKind.PSI_MINUS: (0, 1, -1, 0),
}


def bell_state(kind: BellKind) -> TimeBinState:
    return TimeBinState(np.array(_BELL[kind], dtype=complex) * SQRT2_INV)


def _check_normalized(state: TimeBinState) -> None:
    if abs(state.norm() - 1.0) > NORM_TOL:
        raise InvalidInputError(f"state is not normalized (norm={state.norm():.15g})")


def energy_projector(phase: float, sign: int) -> np.ndarray:
    """Ket ``(|1> + s e^{i phase} |2>)/sqrt(2)``.

    Its bra is ``(<1| + s e^{-i phase} <2|)/sqrt(2)``, so ``np.vdot`` with this
    vector applies the analyzer projection used throughout the package.
    """
    return np.array([1.0, sign * np.exp(1j * phase)], dtype=complex) * SQRT2_INV


def coincidence_probability(
    state: TimeBinState, a: EnergyBasisSetting, b: EnergyBasisSetting
) -> dict[tuple[int, int], float]:
    """Joint outcome table for energy-basis analysis of both photons.

    Keys are ``(s_A, s_B)`` with ``s`` in ``{+1, -1}``. For ``|Psi+>`` the
    ``(+1, +1)`` entry is ``(1 + cos(phi_A - phi_B)) / 4``.
    """
    _check_normalized(state)
    psi = state.matrix()
    table = {}
    for sa in SIGNS:
        pa = energy_projector(a.phase, sa)
        for sb in SIGNS:
            pb = energy_projector(b.phase, sb)
            amp = pa.conj() @ psi @ pb.conj()
            table[(sa, sb)] = float(abs(amp) ** 2)
    return table


def time_basis_probability(state: TimeBinState) -> dict[tuple[int, int], float]:
    _check_normalized(state)
    probs = np.abs(state.amplitudes) ** 2
    return {(i, j): float(probs[2 * (i - 1) + (j - 1)]) for i in BINS for j in BINS}


def _check_visibility(V: float) -> None:
    if not (0.0 <= V <= 1.0) or math.isnan(V):
        raise InvalidInputError(f"visibility must lie in [0, 1], got {V}")


def fidelity_from_visibility(V: float) -> float:
    """Bell-state fidelity of a Werner state with fringe visibility ``V``."""
    _check_visibility(V)
    return (3.0 * V + 1.0) / 4.0


def chsh_from_visibility(V: float, dV: float = 0.0) -> tuple[float, float]:
    """CHSH value inferred for a Werner state, with linearly propagated error."""
    _check_visibility(V)
    if not dV >= 0.0:
        raise InvalidInputError(f"dV must be non-negative, got {dV}")
    k = 2.0 * math.sqrt(2.0)
    return k * V, k * dV
