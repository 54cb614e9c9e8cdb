"""Pinned regression checks run by ``swapqkd selftest``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bsm import click_distribution, fock_click_distribution
from .finite_key import SecurityParams, SiftedSummary, analyze, binary_entropy
from .timebin import BellKind, bell_state, fidelity_from_visibility

REFERENCE_RUN = SiftedSummary(n_energy=2485, n_time=2611, e_b_energy=0.09980, e_b_time=0.09575, e_b_total=0.09772)
REFERENCE_BITS = {"energy": 60, "time": 58, "total": 118}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def check_reference_run() -> Check:
    report = analyze(REFERENCE_RUN, SecurityParams(epsilon=1e-10, f_ec=1.16))
    got = {"energy": report.energy.secure_bits, "time": report.time.secure_bits, "total": report.total_bits}
    return Check("reference_run_secure_bits", got == REFERENCE_BITS, f"got {got}, expected {REFERENCE_BITS}")


def check_entropy_grid(points: int = 1000) -> Check:
    x = np.linspace(0.0, 1.0, points)
    direct = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    direct[inner] = -xi * np.log2(xi) - (1 - xi) * np.log2(1 - xi)
    ours = np.array([binary_entropy(float(v)) for v in x])
    mirrored = np.array([binary_entropy(float(1 - v)) for v in x])
    err = float(np.max(np.abs(ours - direct)))
    sym = float(np.max(np.abs(ours - mirrored)))
    ok = bool(err < 1e-12 and sym < 1e-12 and binary_entropy(0.5) == 1.0)
    return Check("binary_entropy_grid", ok, f"max |H - direct| = {err:.3g}, max asymmetry = {sym:.3g}")


def check_bs_oracle() -> Check:
    worst = 0.0
    for kind in BellKind:
        for zeta in (0.0, 0.25, 0.5, 0.75, 1.0):
            a = click_distribution(bell_state(kind), zeta)
            b = fock_click_distribution(bell_state(kind), zeta)
            for key in set(a) | set(b):
                worst = max(worst, abs(a.get(key, 0.0) - b.get(key, 0.0)))
    return Check("beam_splitter_oracle", bool(worst < 1e-12), f"max table difference {worst:.3g}")


def check_fidelity() -> Check:
    f = fidelity_from_visibility(0.799)
    return Check("fidelity_formula", math.isclose(f, 0.84925, abs_tol=1e-12), f"F(0.799) = {f!r}")


def run_selftest() -> list[Check]:
    return [check_reference_run(), check_entropy_grid(), check_bs_oracle(), check_fidelity()]
