"""Fibre links: loss, slow delay/polarisation drift and the feedback loops."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class ChannelParams:
    """One fibre link from a source node to the measurement station.

    Drift rates are random-walk intensities: after ``t`` seconds without
    correction the delay has standard deviation ``delay_drift_rate * sqrt(t)``.
    The defaults are placeholders chosen so that the 200 s feedback keeps the
    mean mode overlap above 0.95; they are not fitted to any measurement.
    """

    length_km: float = 14.7
    attenuation_db_per_km: float = 0.2
    delay_drift_rate: float = 1.0  # ps / sqrt(s)
    pol_drift_rate: float = 0.01  # rad / sqrt(s)
    feedback_interval_s: float = 200.0
    coherence_time_ps: float = 110.0
    feedback: bool = True
    delay_resolution_ps: float = 1.0
    pol_leakage: float = 0.1

    def __post_init__(self):
        for name in (
            "length_km",
            "attenuation_db_per_km",
            "delay_drift_rate",
            "pol_drift_rate",
            "feedback_interval_s",
            "coherence_time_ps",
            "delay_resolution_ps",
            "pol_leakage",
        ):
            value = getattr(self, name)
            if not value >= 0:
                raise InvalidInputError(f"{name} must be >= 0, got {value}")
        if self.coherence_time_ps == 0:
            raise InvalidInputError("coherence_time_ps must be positive")
        if self.pol_leakage > 1:
            raise InvalidInputError("pol_leakage must lie in [0, 1]")


@dataclass(frozen=True)
class ChannelState:
    delay_offset_ps: float = 0.0
    pol_angle_rad: float = 0.0
    elapsed_since_feedback_s: float = 0.0


def transmittance(params: ChannelParams) -> float:
    return 10.0 ** (-params.attenuation_db_per_km * params.length_km / 10.0)


def wrap_pol_angle(theta):
    """Fold an angle into [0, pi/2] by reflection at both ends."""
    t = np.mod(theta, math.pi)
    return np.where(t > HALF_PI, math.pi - t, t)


def advance_drift(
    state: ChannelState, dt: float, params: ChannelParams, rng: np.random.Generator
) -> ChannelState:
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    sd = math.sqrt(dt)
    d_delay, d_pol = rng.standard_normal(2)
    return ChannelState(
        delay_offset_ps=state.delay_offset_ps + params.delay_drift_rate * sd * d_delay,
        pol_angle_rad=float(
            wrap_pol_angle(state.pol_angle_rad + params.pol_drift_rate * sd * d_pol)
        ),
        elapsed_since_feedback_s=state.elapsed_since_feedback_s + dt,
    )


def apply_feedback(state: ChannelState, params: ChannelParams) -> ChannelState:
    """Correct the accumulated drift once a feedback interval has elapsed.

    The delay line moves in steps of ``delay_resolution_ps``, leaving a residual
    of at most half a step; the polarisation loop removes all but a fraction
    ``pol_leakage`` of the angle.
    """
    if not params.feedback or state.elapsed_since_feedback_s < params.feedback_interval_s:
        return state
    res = params.delay_resolution_ps
    delay = state.delay_offset_ps
    if res > 0:
        delay = delay - res * round(delay / res)
    else:
        delay = 0.0
    return replace(
        state,
        delay_offset_ps=delay,
        pol_angle_rad=state.pol_angle_rad * params.pol_leakage,
        elapsed_since_feedback_s=0.0,
    )


def mode_overlap(
    state_a: ChannelState, state_b: ChannelState, params: ChannelParams
) -> float:
    """Indistinguishability of the two photons arriving at the beam splitter."""
    dtau = state_a.delay_offset_ps - state_b.delay_offset_ps
    sigma = params.coherence_time_ps
    pol = math.cos(state_a.pol_angle_rad - state_b.pol_angle_rad) ** 2
    return pol * math.exp(-(dtau**2) / (2.0 * sigma**2))


def simulate_link_pair(
    params_a: ChannelParams,
    params_b: ChannelParams,
    duration_s: float,
    step_s: float,
    rng_a: np.random.Generator,
    rng_b: np.random.Generator,
) -> np.ndarray:
    """Mode overlap sampled on a regular time grid for two drifting links.

    Returns an array of length ``ceil(duration_s / step_s)`` (at least 1);
    element ``j`` is the overlap holding during ``[j*step_s, (j+1)*step_s)``.
    Feedback is evaluated between steps.
    """
    n = max(1, math.ceil(duration_s / step_s))
    out = np.empty(n)
    sa, sb = ChannelState(), ChannelState()
    for j in range(n):
        out[j] = mode_overlap(sa, sb, params_a)
        sa = apply_feedback(advance_drift(sa, step_s, params_a, rng_a), params_a)
        sb = apply_feedback(advance_drift(sb, step_s, params_b, rng_b), params_b)
    return out
