"""Run configuration documents (YAML) and their validation.

Every section is optional; missing fields take the documented defaults. Unknown
keys are rejected and every error names the dotted path of the bad field.
"""
from __future__ import annotations

import hashlib
import json
import math
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .bsm import DetectorParams
from .channel import ChannelParams
from .errors import ConfigError
from .experiment import ExperimentConfig
from .finite_key import SecurityParams, SiftedSummary
from .source import SourceParams


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SourceSection(_Section):
    mu: float = Field(0.03, ge=0)
    pump_phase: float = 0.0
    repetition_rate: float = Field(300e6, gt=0)
    noise_single_rate: float = Field(0.0, ge=0, le=1)


class ChannelSection(_Section):
    length_km: float = Field(14.7, ge=0)
    attenuation_db_per_km: float = Field(0.2, ge=0)
    delay_drift_rate: float = Field(1.0, ge=0)
    pol_drift_rate: float = Field(0.01, ge=0)
    feedback: bool = True
    feedback_interval_s: float = Field(200.0, ge=0)
    coherence_time_ps: float = Field(110.0, gt=0)
    delay_resolution_ps: float = Field(1.0, ge=0)
    pol_leakage: float = Field(0.1, ge=0, le=1)


class DetectorSection(_Section):
    efficiency: float = Field(0.5, ge=0, le=1)
    dark_count_prob: float = Field(0.0, ge=0, lt=1)
    deadtime_windows: int = Field(0, ge=0)


class BasisSection(_Section):
    time: float = Field(0.5, ge=0, le=1)
    energy: float = Field(0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _sums_to_one(self):
        if abs(self.time + self.energy - 1.0) > 1e-12:
            raise ValueError("basis probabilities must sum to 1")
        return self


class SourcesSection(_Section):
    a: SourceSection = SourceSection()
    b: SourceSection = SourceSection()


LINK_LENGTHS_KM = {"a": 14.7, "b": 10.6}


class ChannelsSection(_Section):
    a: ChannelSection = ChannelSection(length_km=LINK_LENGTHS_KM["a"])
    b: ChannelSection = ChannelSection(length_km=LINK_LENGTHS_KM["b"])

    @model_validator(mode="before")
    @classmethod
    def _side_lengths(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            for side, length in LINK_LENGTHS_KM.items():
                if isinstance(data.get(side), dict) and "length_km" not in data[side]:
                    data[side] = {**data[side], "length_km": length}
        return data


class DetectorsSection(_Section):
    eve: DetectorSection = DetectorSection()
    alice: DetectorSection = DetectorSection()
    bob: DetectorSection = DetectorSection()


class BasesSection(_Section):
    alice: BasisSection = BasisSection()
    bob: BasisSection = BasisSection()


class SimulationSection(_Section):
    windows: int = Field(1_000_000, gt=0)
    emission: Literal["poisson", "heralded", "single"] = "poisson"
    purity: float = Field(0.994, ge=0, le=1)
    seconds_per_window: Optional[float] = Field(None, gt=0)
    drift_step_s: float = Field(1.0, gt=0)
    bob_frame_phase: float = math.pi
    bases: BasesSection = BasesSection()


class FringeSection(_Section):
    phi_b: float = 0.0
    phi_a_grid: Optional[list[float]] = None
    points: int = Field(13, ge=4)

    def grid(self) -> list[float]:
        if self.phi_a_grid is not None:
            return list(self.phi_a_grid)
        return [2 * math.pi * k / self.points for k in range(self.points)]


class SecuritySection(_Section):
    epsilon: float = Field(1e-10, gt=0, lt=1)
    f_ec: float = Field(1.16, ge=1)


class KeyrateSection(_Section):
    """Sifted-key statistics for the ``keyrate`` command (defaults: the 118-bit reference run)."""

    n_energy: int = Field(2485, ge=0)
    n_time: int = Field(2611, ge=0)
    e_b_energy: float = Field(0.09980, ge=0, le=0.5)
    e_b_time: float = Field(0.09575, ge=0, le=0.5)
    e_b_total: Optional[float] = Field(0.09772, ge=0, le=0.5)


class CurveSection(_Section):
    n_per_basis: int = Field(2500, ge=1)
    e_b_grid: Optional[list[float]] = None
    e_b_max: float = Field(0.2, gt=0, lt=0.5)
    points: int = Field(41, ge=2)

    def grid(self) -> list[float]:
        if self.e_b_grid is not None:
            return list(self.e_b_grid)
        return [self.e_b_max * k / (self.points - 1) for k in range(self.points)]


class OutputSection(_Section):
    path: Optional[str] = None
    format: Literal["json", "csv"] = "json"


class RunConfig(_Section):
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    sources: SourcesSection = SourcesSection()
    channels: ChannelsSection = ChannelsSection()
    detectors: DetectorsSection = DetectorsSection()
    simulation: SimulationSection = SimulationSection()
    fringe: FringeSection = FringeSection()
    security: SecuritySection = SecuritySection()
    keyrate: KeyrateSection = KeyrateSection()
    curve: CurveSection = CurveSection()
    output: OutputSection = OutputSection()


def _loc(loc) -> str:
    return ".".join(str(p) for p in loc)


def parse_config(document: str) -> RunConfig:
    try:
        data = yaml.safe_load(document) if document.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError("", f"not valid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_loc(err["loc"]), err["msg"]) from None


def dump_config(config: RunConfig) -> dict:
    return config.model_dump(mode="json")


def serialize_config(config: RunConfig) -> str:
    return yaml.safe_dump(dump_config(config), sort_keys=False)


def config_digest(config: RunConfig) -> str:
    canonical = json.dumps(dump_config(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _source(s: SourceSection) -> SourceParams:
    return SourceParams(
        mu=s.mu,
        pump_phase_delta=s.pump_phase,
        repetition_rate=s.repetition_rate,
        noise_single_rate=s.noise_single_rate,
    )


def _channel(c: ChannelSection) -> ChannelParams:
    return ChannelParams(**c.model_dump())


def _detector(d: DetectorSection) -> DetectorParams:
    return DetectorParams(
        efficiency=d.efficiency,
        dark_count_prob_per_window=d.dark_count_prob,
        deadtime_windows=d.deadtime_windows,
    )


def experiment_config(config: RunConfig, seed: int) -> ExperimentConfig:
    sim = config.simulation
    try:
        return ExperimentConfig(
            source_a=_source(config.sources.a),
            source_b=_source(config.sources.b),
            channel_a=_channel(config.channels.a),
            channel_b=_channel(config.channels.b),
            eve=_detector(config.detectors.eve),
            alice=_detector(config.detectors.alice),
            bob=_detector(config.detectors.bob),
            windows=sim.windows,
            master_seed=seed,
            p_time_alice=sim.bases.alice.time,
            p_time_bob=sim.bases.bob.time,
            emission=sim.emission,
            purity=sim.purity,
            seconds_per_window=sim.seconds_per_window,
            drift_step_s=sim.drift_step_s,
            bob_frame_phase=sim.bob_frame_phase,
        )
    except ConfigError as exc:
        raise ConfigError(_section_path(exc.path), str(exc).split(": ", 1)[-1]) from None


_PATHS = {
    "source_a": "sources.a",
    "source_b": "sources.b",
    "alice": "detectors.alice",
    "bob": "detectors.bob",
    "windows": "simulation.windows",
    "emission": "simulation.emission",
    "purity": "simulation.purity",
    "p_time_alice": "simulation.bases.alice.time",
    "p_time_bob": "simulation.bases.bob.time",
    "master_seed": "seed",
}


def _section_path(path: str) -> str:
    head, _, rest = path.partition(".")
    mapped = _PATHS.get(head, f"simulation.{head}")
    return f"{mapped}.{rest}" if rest else mapped


def security_params(config: RunConfig) -> SecurityParams:
    return SecurityParams(epsilon=config.security.epsilon, f_ec=config.security.f_ec)


def sifted_summary(config: RunConfig) -> SiftedSummary:
    k = config.keyrate
    return SiftedSummary(k.n_energy, k.n_time, k.e_b_energy, k.e_b_time, k.e_b_total)
