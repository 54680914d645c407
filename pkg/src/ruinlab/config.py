"""YAML experiment configs, validated before anything runs.

Unknown keys anywhere raise a validation error.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .levy_models import ClaimsProcessSpec, ParetoClaims, UniformClaims
from .market_models import (
    BoundaryPowerJump,
    CirParams,
    ConstantRate,
    DegenerateJump,
    DiffusionSV,
    ExpLevy,
    GBM,
    MarketModel,
    PiecewiseConstantRate,
    UniformJump,
)
from .mc_engine import DEFAULT_MESH
from .strategies import AsymptoticallyOptimal, ConstantStrategy, make_feedback

__all__ = ["ConfigError", "ExperimentConfig", "list_presets", "load_config", "load_preset"]


class ConfigError(ValueError):
    """Raised for any unreadable or invalid experiment config."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ClaimsBlock(_Strict):
    law: Literal["pareto", "uniform"] = "pareto"
    alpha: float | None = Field(default=None, gt=0)
    scale: float = Field(default=1.0, gt=0)
    low: float | None = None
    high: float | None = None
    intensity: float = Field(default=1.0, ge=0)
    premium: float = Field(default=0.0, ge=0)
    diffusion_vol: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _law_params(self):
        if self.law == "pareto" and self.alpha is None:
            raise ValueError("pareto claims need alpha")
        if self.law == "uniform" and (self.low is None or self.high is None):
            raise ValueError("uniform claims need low and high")
        return self

    def build(self) -> ClaimsProcessSpec:
        if self.law == "pareto":
            law = ParetoClaims(self.alpha, self.scale)
        else:
            law = UniformClaims(self.low, self.high)
        return ClaimsProcessSpec(self.premium, self.diffusion_vol, self.intensity, law)


class DegenerateJumpBlock(_Strict):
    kind: Literal["degenerate"]
    value: float


class UniformJumpBlock(_Strict):
    kind: Literal["uniform"]
    low: float
    high: float


class BoundaryPowerBlock(_Strict):
    kind: Literal["boundary_power"]
    beta: float
    upper: float = -0.5


JumpBlock = Annotated[
    Union[DegenerateJumpBlock, UniformJumpBlock, BoundaryPowerBlock], Field(discriminator="kind")
]


def _jump_law(block):
    if isinstance(block, DegenerateJumpBlock):
        return DegenerateJump(block.value)
    if isinstance(block, UniformJumpBlock):
        return UniformJump(block.low, block.high)
    return BoundaryPowerJump(block.beta, block.upper)


class GBMBlock(_Strict):
    model: Literal["gbm"]
    mu: float
    sigma: float = Field(ge=0)

    def build(self):
        return GBM(self.mu, self.sigma)


class ExpLevyBlock(_Strict):
    model: Literal["exp_levy"]
    drift: float = 0.0
    sigma: float = Field(default=0.0, ge=0)
    jump_rate: float = Field(default=0.0, ge=0)
    jump_law: JumpBlock | None = None

    def build(self):
        law = _jump_law(self.jump_law) if self.jump_law is not None else None
        return ExpLevy(self.drift, self.sigma, self.jump_rate, law)


class CirBlock(_Strict):
    kappa: float = Field(gt=0)
    theta: float = Field(gt=0)
    delta: float = Field(ge=0)
    v0: float = Field(ge=0)


class DiffusionSVBlock(_Strict):
    model: Literal["diffusion_sv"]
    mu: float
    variance: CirBlock

    def build(self):
        v = self.variance
        return DiffusionSV(self.mu, CirParams(v.kappa, v.theta, v.delta, v.v0))


AssetBlock = Annotated[Union[GBMBlock, ExpLevyBlock, DiffusionSVBlock], Field(discriminator="model")]


class StepRateBlock(_Strict):
    breaks: list[float]
    values: list[float]


class MarketBlock(_Strict):
    rate: float | StepRateBlock = 0.0
    assets: list[AssetBlock] = Field(default_factory=list)

    def build(self) -> MarketModel:
        if isinstance(self.rate, StepRateBlock):
            rate = PiecewiseConstantRate(tuple(self.rate.breaks), tuple(self.rate.values))
        else:
            rate = ConstantRate(float(self.rate))
        return MarketModel(rate, tuple(a.build() for a in self.assets))


class FeedbackBlock(_Strict):
    rule: str
    params: dict[str, float | list[float]] = Field(default_factory=dict)


StrategyBlock = Union[list[float], Literal["asymptotically-optimal"], FeedbackBlock]


def build_strategy(block: StrategyBlock, market: MarketModel, alpha: float | None):
    if block == "asymptotically-optimal":
        if alpha is None:
            raise ConfigError("asymptotically-optimal strategy needs Pareto claims (alpha)")
        return AsymptoticallyOptimal(alpha)
    if isinstance(block, FeedbackBlock):
        return make_feedback(block.rule, market.n_assets, **block.params)
    return ConstantStrategy(tuple(block))


def strategy_label(block: StrategyBlock) -> str:
    if isinstance(block, FeedbackBlock):
        return block.rule
    if isinstance(block, str):
        return block
    return "[" + ",".join(repr(float(w)) for w in block) + "]"


class RunBlock(_Strict):
    x: float = Field(default=1.0, gt=0)
    eps: list[float] = Field(default_factory=lambda: [0.1])
    n_paths: int = Field(default=10_000, ge=1)
    mesh: float = Field(default=DEFAULT_MESH, gt=0, le=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    tilt: float = Field(default=0.0, ge=0)
    workers: int = Field(default=1, ge=1)
    block_size: int = Field(default=256, ge=1)
    constant_paths: int = Field(default=10_000, ge=2)
    out: str | None = None
    format: Literal["csv", "json"] = "csv"

    @field_validator("eps", mode="before")
    @classmethod
    def _scalar_eps(cls, v):
        return [v] if isinstance(v, (int, float)) else v

    @field_validator("eps")
    @classmethod
    def _eps_nonneg(cls, v):
        if not v or any(e < 0 for e in v):
            raise ValueError("eps values must be >= 0 and at least one is needed")
        return v


class ChecksBlock(_Strict):
    delta: float | None = Field(default=None, ge=0)
    a: float = Field(default=0.5, gt=0, lt=1)
    gamma: float | None = Field(default=None, gt=0)


class ExperimentConfig(_Strict):
    claims: ClaimsBlock
    market: MarketBlock = Field(default_factory=MarketBlock)
    strategy: StrategyBlock = Field(default_factory=list)
    family: list[StrategyBlock] = Field(default_factory=list)
    run: RunBlock = Field(default_factory=RunBlock)
    checks: ChecksBlock = Field(default_factory=ChecksBlock)

    def claims_spec(self) -> ClaimsProcessSpec:
        return self.claims.build()

    def market_model(self) -> MarketModel:
        return self.market.build()

    def build_strategy(self, block: StrategyBlock | None = None):
        block = self.strategy if block is None else block
        # an empty list means "no risky assets": fill zeros for each asset
        if block == [] and self.market.assets:
            block = [0.0] * len(self.market.assets)
        return build_strategy(block, self.market_model(), self.claims.alpha if self.claims.law == "pareto" else None)

    def with_run(self, **updates) -> "ExperimentConfig":
        """Copy with run-block overrides; ``None`` values are ignored."""
        updates = {k: v for k, v in updates.items() if v is not None}
        if not updates:
            return self
        run = RunBlock.model_validate({**self.run.model_dump(), **updates})
        return self.model_copy(update={"run": run})


def _validate(data, source: str) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except Exception as exc:  # pydantic.ValidationError and model-level ValueErrors
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return _validate(data, str(path))


def list_presets() -> list[str]:
    root = resources.files("ruinlab") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ExperimentConfig:
    root = resources.files("ruinlab") / "presets"
    res = root / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return _validate(yaml.safe_load(res.read_text()), f"preset {name}")
