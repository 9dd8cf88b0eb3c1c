"""Experiment spec files.

One file may configure every subcommand; each command reads its own
section and ignores the others. Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import tomlkit
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.config import Conf
from core.distributions import ResponseSpace
from core.enums.loss_kind import LossKind, OptimizerKind
from core.enums.tilt_kind import SpaceDistribution, TiltKind
from core.exceptions import InvalidConfigError
from core.payloads.training import TrainConfig
from core.space_generator import SpaceRecipe, generate_spaces
from core.storage import load_spaces
from core.tilts import TiltFunction, tilt_from_parameter


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpaceSpec(StrictModel):
    """Generate synthetic spaces, or load them from ``spaces_file``"""

    count: int = Field(20, ge=1)
    size: int = Field(100, ge=2)
    distribution: SpaceDistribution = SpaceDistribution.DIRICHLET
    alpha: float = Field(1.0, gt=0)
    zipf_s: float = Field(1.1, gt=0)
    attribute_reward_corr: float = Field(0.3, ge=-1, le=1)
    attribute_rarity_corr: float = Field(0.3, ge=-1, le=1)
    spaces_file: str | None = None

    def recipe(self) -> SpaceRecipe:
        return SpaceRecipe(
            size=self.size,
            distribution=self.distribution,
            alpha=self.alpha,
            zipf_s=self.zipf_s,
            attribute_reward_corr=self.attribute_reward_corr,
            attribute_rarity_corr=self.attribute_rarity_corr,
        )

    def resolve(self, seed: int) -> list[ResponseSpace]:
        if self.spaces_file:
            return load_spaces(Path(self.spaces_file))
        return generate_spaces(self.recipe(), self.count, seed)


class TiltSpec(StrictModel):
    kind: TiltKind
    parameter: float

    def tilt(self) -> TiltFunction:
        return tilt_from_parameter(self.kind, self.parameter)


def _default_tilts() -> list[TiltSpec]:
    return [
        TiltSpec(kind=TiltKind.POWER, parameter=2),
        TiltSpec(kind=TiltKind.POWER, parameter=8),
        TiltSpec(kind=TiltKind.EXPONENTIAL, parameter=1.0),
        TiltSpec(kind=TiltKind.EXPONENTIAL, parameter=5.0),
    ]


class CurvesSpec(StrictModel):
    n_values: list[int] = Field(default_factory=lambda: list(range(1, 17)))
    kl_grid: list[float] = Field(default_factory=list)

    @field_validator("n_values")
    @classmethod
    def _positive(cls, values: list[int]) -> list[int]:
        if not values or min(values) < 1:
            raise ValueError("n_values must be a non-empty list of integers >= 1")
        return values

    @field_validator("kl_grid")
    @classmethod
    def _non_negative(cls, values: list[float]) -> list[float]:
        if values and min(values) < 0:
            raise ValueError("kl_grid entries must be >= 0")
        return values


class BoundsSpec(StrictModel):
    spaces: SpaceSpec = Field(default_factory=lambda: SpaceSpec(count=50))
    tilts: list[TiltSpec] = Field(default_factory=_default_tilts, min_length=1)


class GenSpec(StrictModel):
    spaces: SpaceSpec = Field(default_factory=SpaceSpec)
    n: int = Field(8, ge=1)
    records_per_prompt: int = Field(10_000, ge=0)


class TrainSettings(StrictModel):
    """Mirror of TrainConfig; unset learning_rate and alpha fall back to the app config"""

    loss: LossKind = LossKind.BONBON
    n: int = Field(8, ge=1)
    alpha: float | None = Field(None, ge=0, le=1)
    beta: float | None = Field(None, gt=0)
    beta_scale: float = Field(1.0, gt=0)
    learning_rate: float | None = Field(None, gt=0)
    steps: int = Field(2000, ge=0)
    batch_size: int | None = Field(None, ge=1)
    eval_every: int = Field(100, ge=1)
    optimizer: OptimizerKind = OptimizerKind.RMSPROP

    def to_config(self, seed: int, **overrides: Any) -> TrainConfig:
        data = self.model_dump()
        data.update(overrides)
        if data["learning_rate"] is None:
            data["learning_rate"] = Conf.learning_rate
        if data["loss"] is LossKind.BONBON and data["alpha"] is None:
            data["alpha"] = Conf.alpha
        return TrainConfig(seed=seed, **data)


class TrainSpec(StrictModel):
    spaces_file: str = "spaces.json"
    dataset_file: str = "dataset.jsonl"
    config: TrainSettings = Field(default_factory=TrainSettings)


class EvalSpec(StrictModel):
    spaces_file: str = "spaces.json"
    # None scores the reference policy itself
    policy_file: str | None = None
    n: int = Field(8, ge=1)


class SweepSpec(StrictModel):
    spaces_file: str = "spaces.json"
    dataset_file: str = "dataset.jsonl"
    alphas: list[float] = Field(default_factory=lambda: [0.0, 0.005, 0.05, 0.5, 1.0])
    beta_scales: list[float] = Field(default_factory=lambda: [0.2, 1.0, 5.0])
    config: TrainSettings = Field(default_factory=TrainSettings)

    @field_validator("alphas")
    @classmethod
    def _unit_interval(cls, values: list[float]) -> list[float]:
        if not values or any(not 0.0 <= a <= 1.0 for a in values):
            raise ValueError("alphas must be a non-empty list of values in [0, 1]")
        return values

    @field_validator("beta_scales")
    @classmethod
    def _positive_scales(cls, values: list[float]) -> list[float]:
        if not values or any(s <= 0 for s in values):
            raise ValueError("beta_scales must be a non-empty list of values > 0")
        return values


class ReproduceSpec(StrictModel):
    """Sizes of the acceptance suite; defaults are the published targets"""

    criteria: list[int] = Field(default_factory=lambda: list(range(1, 10)))
    win_rate_size: int = Field(10_000, ge=2)
    mc_trials: int = Field(100_000, ge=1)
    kl_size: int = Field(100_000, ge=2)
    identity_size: int = Field(10_000, ge=2)
    identity_trials: int = Field(1_000_000, ge=1)
    gradient_points: int = Field(100, ge=1)
    bound_spaces: int = Field(50, ge=1)
    train_prompts: int = Field(20, ge=1)
    train_size: int = Field(100, ge=2)
    records_per_prompt: int = Field(10_000, ge=1)
    train: TrainSettings = Field(
        default_factory=lambda: TrainSettings(alpha=0.005, learning_rate=0.05, steps=3000)
    )
    # corrupts beta*_n inside criterion 4 so the failure path can be exercised
    inject_beta_fault: bool = False

    @field_validator("criteria")
    @classmethod
    def _known(cls, values: list[int]) -> list[int]:
        unknown = [c for c in values if not 1 <= c <= 9]
        if unknown:
            raise ValueError(f"unknown criteria {unknown}, expected numbers 1 to 9")
        return sorted(set(values))


class ExperimentSpec(StrictModel):
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str | None = None
    threads: int | None = Field(None, ge=1)
    curves: CurvesSpec = Field(default_factory=CurvesSpec)
    bounds: BoundsSpec = Field(default_factory=BoundsSpec)
    gen: GenSpec = Field(default_factory=GenSpec)
    train: TrainSpec = Field(default_factory=TrainSpec)
    eval: EvalSpec = Field(default_factory=EvalSpec)
    reproduce: ReproduceSpec = Field(default_factory=ReproduceSpec)
    sweep: SweepSpec = Field(default_factory=SweepSpec)

    def section(self, name: str) -> StrictModel:
        return getattr(self, name)


def read_spec_data(path: Path) -> dict[str, Any]:
    """Raw spec mapping from a .json or .toml file"""
    text = Path(path).read_text(encoding="utf-8")
    match Path(path).suffix.lower():
        case ".toml":
            return tomlkit.parse(text).unwrap()
        case ".json":
            data = json.loads(text)
            if not isinstance(data, dict):
                raise InvalidConfigError(f"{path}: spec must be a JSON object")
            return data
        case other:
            raise InvalidConfigError(f"{path}: unsupported spec format '{other}'")


def load_spec(path: Path | None) -> ExperimentSpec:
    if path is None:
        return ExperimentSpec()
    return ExperimentSpec.model_validate(read_spec_data(path))
