"""Experiment configuration

Configs are YAML documents validated by pydantic models. CLI flags are
applied on top of a loaded config with ``with_cli_overrides``.

Example:
    scenario: spring-mass
    iterations: 20
    seed: 7
    toggles:
      shifted_cost_iterations: [1, 10, 20]
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from lmpc_core.constants import (
    CONSTRAINT_MARGIN,
    PROPERTY_TOLERANCE,
    QP_EPS_ABS,
    QP_EPS_REL,
    STATE_MATCH_TOLERANCE,
)
from lmpc_core.exceptions import ConfigError

from .scenarios import ScenarioSpec, get_scenario

ScenarioName = Literal["spring-mass", "building", "tiny"]
Weight = Union[float, List[float], List[List[float]]]


class ScenarioOverrides(BaseModel):
    """Replacements for built-in scenario parameters"""

    model_config = ConfigDict(extra="forbid")

    horizon: Optional[int] = Field(default=None, ge=1)
    x_s: Optional[List[float]] = None
    alpha_target: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    Q_lqr: Optional[Weight] = None
    R_lqr: Optional[Weight] = None
    residual_scale: Optional[float] = Field(default=None, ge=0.0)
    theta_scale: Optional[float] = Field(default=None, ge=0.0)
    relaxed_seed: Optional[bool] = None
    fixed_theta: Optional[List[float]] = None

    def apply(self, spec: ScenarioSpec) -> ScenarioSpec:
        spec = spec.with_overrides(
            horizon=self.horizon,
            x_s=self.x_s,
            alpha_target=self.alpha_target,
            Q_lqr=self.Q_lqr,
            R_lqr=self.R_lqr,
            residual_scale=self.residual_scale,
            theta_scale=self.theta_scale,
            relaxed_seed=self.relaxed_seed,
        )
        if self.fixed_theta is not None and not spec.theta_domain.contains(self.fixed_theta):
            raise ConfigError(f"fixed_theta {self.fixed_theta} lies outside the theta domain")
        return spec


class ToggleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dump_safe_sets: bool = False
    shifted_cost_iterations: List[int] = Field(default_factory=list)
    record_trajectories: bool = True
    check_invariants: bool = True


class ToleranceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    qp_eps_abs: float = Field(default=QP_EPS_ABS, gt=0.0)
    qp_eps_rel: float = Field(default=QP_EPS_REL, ge=0.0)
    state_match: float = Field(default=STATE_MATCH_TOLERANCE, ge=0.0)
    property: float = Field(default=PROPERTY_TOLERANCE, ge=0.0)
    constraint_margin: float = Field(default=CONSTRAINT_MARGIN, ge=0.0)


class DeviationBound(BaseModel):
    """Componentwise half widths of constant dA and dB draws"""

    model_config = ConfigDict(extra="forbid")

    A: Union[float, List[List[float]]] = 0.0
    B: Union[float, List[List[float]]] = 0.0


class ExtensionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial_offset_bound: Optional[List[float]] = None
    deviation_bound: Optional[DeviationBound] = None

    @field_validator("initial_offset_bound")
    @classmethod
    def _nonnegative(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(v < 0 for v in value):
            raise ValueError("initial_offset_bound entries must be nonnegative")
        return value


class ExperimentConfig(BaseModel):
    """Validated experiment configuration

    Attributes:
        scenario: built-in scenario name
        iterations: number of LMPC iterations J after the seed
        seed: master seed of every random draw
        output_dir: run directory (default runs/<scenario>-seed<seed>)
        cache_dir: tube artifact cache directory (disabled when unset)
    """

    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioName
    iterations: int = Field(ge=1)
    seed: int = Field(ge=0, lt=2**64)
    output_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None
    overrides: ScenarioOverrides = Field(default_factory=ScenarioOverrides)
    toggles: ToggleConfig = Field(default_factory=ToggleConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    extensions: ExtensionConfig = Field(default_factory=ExtensionConfig)

    @property
    def run_dir(self) -> Path:
        if self.output_dir is not None:
            return self.output_dir
        return Path("runs") / f"{self.scenario}-seed{self.seed}"

    def build_scenario(self) -> ScenarioSpec:
        spec = self.overrides.apply(get_scenario(self.scenario))
        bound = self.extensions.initial_offset_bound
        if bound is not None and len(bound) != spec.model.state_dim:
            raise ConfigError(
                f"initial_offset_bound needs {spec.model.state_dim} entries, got {len(bound)}"
            )
        return spec

    def echo(self) -> Dict[str, Any]:
        """JSON-compatible dump with the resolved output directory"""
        data = self.model_dump(mode="json")
        data["output_dir"] = str(self.run_dir)
        return data

    def with_cli_overrides(
        self,
        *,
        output_dir: Optional[Path] = None,
        seed: Optional[int] = None,
        iterations: Optional[int] = None,
        scenario: Optional[str] = None,
    ) -> "ExperimentConfig":
        data = self.model_dump()
        for key, value in (
            ("output_dir", output_dir),
            ("seed", seed),
            ("iterations", iterations),
            ("scenario", scenario),
        ):
            if value is not None:
                data[key] = value
        return config_from_mapping(data)


def config_from_mapping(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a mapping

    Raises:
        ConfigError: the mapping does not match the schema
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}")


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate a YAML config file

    Raises:
        ConfigError: unreadable file, malformed YAML or schema violation
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML in {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return config_from_mapping(data)
