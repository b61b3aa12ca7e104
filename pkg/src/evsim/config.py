"""Run configuration: one JSON tree validated before any work starts."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping

from .environment import EnvConfig, RewardConfig
from .errors import InvalidConfig
from .orchestrator import CampaignConfig
from .rl_core import RLConfig
from .scenario import ScenarioConfig

# Candidate values swept by the calibration harness.
CALIBRATION_GRID = {
    "learning_rate": (0.001, 0.00075, 0.0005, 0.00025, 0.0001),
    "discount": (0.9, 0.95, 0.99),
    "epsilon_start": (0.95, 0.96, 0.97, 0.98, 0.99),
}
CALIBRATION_ALIASES = {"exploration_rate": "epsilon_start", "discount_factor": "discount"}


def _strict(cls, data: Mapping | None, path: str) -> dict:
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    for k in data:
        if k not in known:
            raise InvalidConfig(f"unknown key {path}.{k}", field=f"{path}.{k}")
    return data


def _build(cls, data: Mapping | None, path: str):
    d = _strict(cls, data, path)
    try:
        return cls(**d)
    except InvalidConfig as exc:
        raise InvalidConfig(str(exc), field=exc.field or path) from None
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{path}: {exc}", field=path) from None


@dataclass
class CalibrateConfig:
    episodes: int = 150
    seeds: tuple = (0,)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.episodes < 2:
            raise InvalidConfig("calibration needs at least two episodes", field="calibrate.episodes")
        if not self.seeds:
            raise InvalidConfig("calibration needs a seed", field="calibrate.seeds")


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    calibrate: CalibrateConfig = field(default_factory=CalibrateConfig)
    scenario_seed: int = 0

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "RunConfig":
        d = _strict(cls, data, "config")
        scen = ScenarioConfig.from_dict(d.get("scenario"))
        camp = dict(_strict(CampaignConfig, d.get("campaign"), "campaign"))
        env = dict(_strict(EnvConfig, camp.pop("env", None), "campaign.env"))
        env["reward"] = _build(RewardConfig, env.get("reward"), "campaign.env.reward")
        camp["env"] = _build(EnvConfig, env, "campaign.env")
        camp["rl"] = _build(RLConfig, camp.get("rl"), "campaign.rl")
        campaign = _build(CampaignConfig, camp, "campaign")
        calibrate = _build(CalibrateConfig, d.get("calibrate"), "calibrate")
        seed = d.get("scenario_seed", 0)
        if not isinstance(seed, int):
            raise InvalidConfig("scenario_seed must be an integer", field="config.scenario_seed")
        return cls(scen, campaign, calibrate, seed)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "campaign": self.campaign.to_dict(),
            "calibrate": {"episodes": self.calibrate.episodes, "seeds": list(self.calibrate.seeds)},
            "scenario_seed": self.scenario_seed,
        }


def calibration_values(param: str) -> tuple:
    name = CALIBRATION_ALIASES.get(param, param)
    if name not in CALIBRATION_GRID:
        raise InvalidConfig(f"no calibration grid for {param!r}", field="calibrate.param")
    return CALIBRATION_GRID[name]


def with_rl(cfg: CampaignConfig, **changes) -> CampaignConfig:
    """Copy of a campaign config with some RL hyperparameters replaced."""
    d = cfg.to_dict()
    for k, v in changes.items():
        name = CALIBRATION_ALIASES.get(k, k)
        if name not in d["rl"]:
            raise InvalidConfig(f"unknown RL parameter {k!r}", field=f"campaign.rl.{k}")
        d["rl"][name] = v
    return CampaignConfig(**{**d, "rl": d["rl"], "env": d["env"]})
