"""Configuration models: scenario profiles, per-run and campaign settings.

Campaign files are JSON. Every key of :class:`SimConfig` may appear at the
top level; ``sweep``, ``seeds``, ``output_dir`` and ``max_runs`` configure
the campaign itself. Unknown keys are rejected.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration files."""


class ScenarioProfile(BaseModel):
    """Large- and small-scale channel parameters for one 3GPP scenario.

    Path loss is ``A + B log10(d_3d) + C log10(f_GHz)``. LoS probability is
    ``min(d1/d, 1) (1 - exp(-d/d2)) + exp(-d/d2)``. Angular spreads are RMS
    values in degrees; ``cluster_*`` spreads place cluster centres around
    the LoS direction and ``ray_*`` spreads place rays around their cluster.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["UMi", "UMa"]
    carrier_hz: float = Field(28e9, gt=6e9)
    pl_los: tuple[float, float, float]
    pl_nlos: tuple[float, float, float]
    los_d1: float = Field(18.0, gt=0)
    los_d2: float = Field(gt=0)
    shadow_std_los: float = Field(ge=0)
    shadow_std_nlos: float = Field(ge=0)
    n_clusters_los: int = Field(ge=1)
    n_clusters_nlos: int = Field(ge=1)
    rays_per_cluster: int = Field(20, ge=1)
    k_factor_db: float = 9.0
    cluster_asd: float = Field(ge=0)
    cluster_asa: float = Field(ge=0)
    cluster_zsd: float = Field(ge=0)
    cluster_zsa: float = Field(ge=0)
    ray_asd: float = Field(ge=0)
    ray_asa: float = Field(ge=0)
    ray_zsa: float = Field(7.0, ge=0)
    ray_zsd: float = Field(1.0, ge=0)
    delay_spread: float = Field(gt=0)
    delay_scaling: float = Field(gt=1)
    cluster_shadow_std: float = Field(3.0, ge=0)


# Medians at 28 GHz from the 3GPP above-6 GHz channel tables, rounded.
# NLoS figures are used for the spreads since LoS links are dominated by the
# direct ray anyway.
DEFAULT_PROFILES: dict[str, dict] = {
    "UMi": dict(
        kind="UMi",
        pl_los=(32.4, 21.0, 20.0),
        pl_nlos=(22.4, 35.3, 21.3),
        los_d1=18.0,
        los_d2=36.0,
        shadow_std_los=4.0,
        shadow_std_nlos=7.82,
        n_clusters_los=12,
        n_clusters_nlos=19,
        cluster_asd=15.6,
        cluster_asa=49.3,
        cluster_zsd=1.0,
        cluster_zsa=7.3,
        ray_asd=10.0,
        ray_asa=22.0,
        delay_spread=66e-9,
        delay_scaling=2.1,
    ),
    "UMa": dict(
        kind="UMa",
        pl_los=(28.0, 22.0, 20.0),
        pl_nlos=(13.54, 39.08, 20.0),
        los_d1=18.0,
        los_d2=63.0,
        shadow_std_los=4.0,
        shadow_std_nlos=6.0,
        n_clusters_los=12,
        n_clusters_nlos=20,
        cluster_asd=21.6,
        cluster_asa=48.9,
        cluster_zsd=4.9,
        cluster_zsa=11.1,
        ray_asd=2.0,
        ray_asa=15.0,
        delay_spread=263e-9,
        delay_scaling=2.3,
    ),
}


def scenario_profile(kind: str, carrier_hz: float = 28e9, **overrides) -> ScenarioProfile:
    if kind not in DEFAULT_PROFILES:
        raise ConfigError(f"unknown scenario {kind!r}")
    return ScenarioProfile(**{**DEFAULT_PROFILES[kind], "carrier_hz": carrier_hz, **overrides})


class SimConfig(BaseModel):
    """Parameters of a single simulation run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: Literal["UMi", "UMa"] = "UMi"
    d: float = Field(100.0, ge=50, le=500, description="square side [m]")
    n_ue: int = Field(25, ge=1)
    n_sectors: int = Field(3, ge=1, le=8)
    n_panels: int = Field(2, ge=1, le=4)
    gnb_rows: int = Field(8, ge=1)
    gnb_cols: int = Field(8, ge=1)
    ue_rows: int = Field(4, ge=1)
    ue_cols: int = Field(4, ge=1)
    bandwidth_hz: float = Field(1e9, gt=0)
    carrier_hz: float = Field(28e9, gt=6e9)
    noise_figure_db: float = 7.0
    outage_db: float = -5.0
    max_phy_rate: float = Field(3.2e9, gt=0, description="bit/s")
    source_rate: float = Field(1e8, gt=0, description="bit/s")
    efficiency: float = Field(0.6, gt=0, le=1)
    sim_duration: float = Field(10.0, ge=0, description="s")
    step_dt: float = Field(0.1, gt=0, description="s")
    seed: int = Field(1, ge=0)
    beamforming: Literal["los_steering", "optimal_isotropic"] = "los_steering"
    gnb_height: float = Field(10.0, gt=0)
    ue_height: float = Field(1.5, gt=0)
    tx_power_dbm: float = 30.0
    hysteresis_db: float = Field(3.0, ge=0)
    coherence_period: float = Field(0.1, gt=0, description="s between small-scale redraws")
    los_period: float = Field(1.0, gt=0, description="s between LoS-state redraws")
    walk_epoch: float = Field(1.0, gt=0, description="s between heading redraws")
    speed_min: float = Field(2.0, gt=0)
    speed_max: float = Field(4.0, gt=0)
    gnb_zeta: float = 0.0
    ue_zeta: float = 0.0
    profile_overrides: dict[str, float | int | tuple[float, float, float]] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        if self.speed_max < self.speed_min:
            raise ValueError("speed_max must be >= speed_min")
        if self.gnb_height == self.ue_height:
            raise ValueError("gnb_height and ue_height must differ")
        try:
            self.profile()
        except ValidationError as exc:
            raise ValueError(f"profile_overrides: {exc}") from None
        return self

    def profile(self) -> ScenarioProfile:
        return scenario_profile(self.scenario, self.carrier_hz, **self.profile_overrides)

    @property
    def n_steps(self) -> int:
        return int(round(self.sim_duration / self.step_dt))


SWEEPABLE = set(SimConfig.model_fields) - {"seed", "profile_overrides"}


class Campaign(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    base: SimConfig = Field(default_factory=SimConfig)
    sweep: dict[str, list] = Field(default_factory=dict)
    seeds: int = Field(1, ge=1)
    output_dir: Optional[str] = None
    max_runs: int = Field(10_000, ge=1)

    @field_validator("sweep")
    @classmethod
    def _known_axes(cls, sweep):
        for key, values in sweep.items():
            if key not in SWEEPABLE:
                raise ValueError(f"cannot sweep unknown parameter {key!r}")
            if not isinstance(values, list):
                raise ValueError(f"sweep axis {key!r} must be a list")
        return sweep

    @model_validator(mode="after")
    def _check(self):
        # validate every sweep point up front so bad values fail before running
        self.configs()
        if self.n_runs > self.max_runs:
            raise ValueError(f"campaign plans {self.n_runs} runs, above max_runs={self.max_runs}")
        return self

    def points(self) -> list[dict]:
        """Sweep points as override dicts, in cross-product order."""
        keys = list(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def configs(self) -> list[SimConfig]:
        base = self.base.model_dump()
        out = []
        for point in self.points():
            try:
                out.append(SimConfig(**{**base, **point}))
            except ValidationError as exc:
                raise ValueError(f"sweep point {point}: {exc}") from None
        return out

    @property
    def n_runs(self) -> int:
        return len(self.points()) * self.seeds

    def to_dict(self) -> dict:
        out = self.base.model_dump(mode="json", exclude_defaults=True)
        out["sweep"] = self.sweep
        out["seeds"] = self.seeds
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        out["max_runs"] = self.max_runs
        return out


CAMPAIGN_KEYS = {"sweep", "seeds", "output_dir", "max_runs"}


def campaign_from_dict(data: dict) -> Campaign:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - CAMPAIGN_KEYS - set(SimConfig.model_fields)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    base = {k: v for k, v in data.items() if k not in CAMPAIGN_KEYS}
    rest = {k: v for k, v in data.items() if k in CAMPAIGN_KEYS}
    try:
        return Campaign(base=SimConfig(**base), **rest)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"] if x != "base") or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(path) -> Campaign:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return campaign_from_dict(data)


def serialize_campaign(campaign: Campaign) -> str:
    return json.dumps(campaign.to_dict(), indent=2, sort_keys=True)


def config_schema() -> dict:
    """JSON schema of a campaign file, with every default spelled out."""
    sim = SimConfig.model_json_schema()
    camp = Campaign.model_json_schema()
    props = dict(sim["properties"])
    for key in sorted(CAMPAIGN_KEYS):
        props[key] = camp["properties"][key]
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "mmsim campaign",
        "description": "SimConfig keys at the top level plus campaign keys; unknown keys are rejected.",
        "type": "object",
        "properties": props,
        "additionalProperties": False,
        **({"$defs": sim["$defs"]} if "$defs" in sim else {}),
    }
