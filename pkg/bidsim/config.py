"""
Experiment documents.

An experiment is a JSON document whose sections mirror the runtime
objects (battery, mpc, sac, stack, demand, forecast). Missing keys
take the defaults below and unknown keys are rejected. Any field can
be overridden from the environment:

  BIDSIM_SAC__GAMMA=0.9
  BIDSIM_SAC__SCHEDULE__HOLD_STEPS=100
  BIDSIM_SEED=3

Values are parsed as JSON, falling back to the raw string.
"""
from typing import Any, List, Literal, Mapping, Optional

import json
import logging
import os

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .agent import RiskSchedule, SacConfig
from .battery import BatteryParams
from .env import (
  BackgroundAgent, DemandSeries, RunSettings,
  default_stack, load_demand_csv, synth_demand,
)
from .exceptions import BidsimError, ConfigError
from .mpc import DEFAULT_GRID_LEVELS, DEFAULT_HORIZON

logger = logging.getLogger(__name__)

ENV_PREFIX = "BIDSIM_"

class _Section(BaseModel):
  model_config = ConfigDict(extra="forbid")

class BatteryConfig(_Section):
  energy_capacity: float = Field(1029.0, gt=0)
  soe_floor: float = Field(0.0, ge=0)
  max_charge: float = Field(300.0, gt=0)
  max_discharge: float = Field(300.0, gt=0)
  eta_charge: float = Field(1.0, gt=0, le=1)
  eta_discharge: float = Field(1.0, gt=0, le=1)
  initial_soe: Optional[float] = None

  @model_validator(mode="after")
  def _check_bounds(self):
    if self.soe_floor >= self.energy_capacity:
      raise ValueError(
        f"soe_floor ({self.soe_floor}) must be less than energy_capacity ({self.energy_capacity})"
      )
    if self.initial_soe is not None and not (self.soe_floor <= self.initial_soe <= self.energy_capacity):
      raise ValueError(
        f"initial_soe ({self.initial_soe}) must lie in [{self.soe_floor}, {self.energy_capacity}]"
      )
    return self

  def params(self) -> BatteryParams:
    return BatteryParams(**self.model_dump(exclude={ "initial_soe" }))

class MpcConfig(_Section):
  horizon: int = Field(DEFAULT_HORIZON, ge=1)
  grid_levels: int = Field(DEFAULT_GRID_LEVELS, ge=2)

class ScheduleConfig(_Section):
  hold_steps: int = Field(400, ge=0)
  ramp_steps: int = Field(2000, ge=0)
  final_supervisor_weight: float = Field(0.5, ge=0.5, le=1.0)

class SacSection(_Section):
  gamma: float = Field(0.98, ge=0, le=1)
  sigma_explore: float = Field(1.0, gt=0)
  sigma_explore_final: float = Field(0.02, gt=0)
  explore_decay_steps: Optional[int] = Field(None, ge=0)
  sigma_policy: float = Field(1.0, gt=0)
  alpha: float = Field(1e-4, gt=0)
  beta1: float = Field(1e-4, gt=0)
  beta2: float = Field(1e-4, gt=0)
  mu: List[float] = Field(default_factory=lambda: [ -10.0 ] * 4, min_length=4, max_length=4)
  hidden_layers: int = Field(6, ge=1)
  hidden_width: int = Field(64, ge=1)
  leak: float = Field(0.01, ge=0, lt=1)
  adagrad_epsilon: float = Field(1e-8, ge=0)
  reward_scale: float = Field(30000.0, gt=0)
  literal_reward: bool = False
  schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)

  @model_validator(mode="after")
  def _check_mu(self):
    if any(m > 0 for m in self.mu):
      raise ValueError(f"penalty weights mu must be <= 0, got {self.mu}")
    return self

  def sac_config(self) -> SacConfig:
    fields = self.model_dump(exclude={ "schedule", "mu" })
    return SacConfig(
      mu=tuple(self.mu),
      schedule=RiskSchedule(**self.schedule.model_dump()),
      **fields,
    )

class GeneratorConfig(_Section):
  agent_id: str
  marginal_cost: float = Field(ge=0)
  capacity: float = Field(ge=0)

class StackConfig(_Section):
  """Either `count` evenly priced generators or an explicit `generators` list."""
  count: int = Field(10, ge=1)
  cost_step: float = Field(10.0, gt=0)
  capacity: float = Field(500.0, gt=0)
  generators: Optional[List[GeneratorConfig]] = None

  def agents(self) -> list:
    if self.generators:
      return [ BackgroundAgent(g.agent_id, g.marginal_cost, g.capacity) for g in self.generators ]
    return default_stack(self.count, self.cost_step, self.capacity)

class DemandConfig(_Section):
  """path: demand CSV to replay. Without it a sinusoidal series is synthesized."""
  path: Optional[str] = None
  days: int = Field(153, ge=1)
  steps_per_day: int = Field(48, ge=1)
  base: float = Field(2500.0, ge=0)
  daily_amplitude: float = Field(1500.0, ge=0)
  noise_std: float = Field(100.0, ge=0)
  seed: int = 0
  start: str = "2018-06-01"

  def series(self) -> DemandSeries:
    if self.path is not None:
      return load_demand_csv(self.path, steps_per_day=self.steps_per_day)
    return synth_demand(
      self.days, self.steps_per_day, self.base,
      self.daily_amplitude, self.noise_std, self.seed,
      start=self.start,
    )

class ForecastConfig(_Section):
  mode: Literal['persistence', 'perfect'] = 'persistence'
  prior_price: Optional[float] = Field(None, ge=0)

class ExperimentConfig(_Section):
  battery: BatteryConfig = Field(default_factory=BatteryConfig)
  mpc: MpcConfig = Field(default_factory=MpcConfig)
  sac: SacSection = Field(default_factory=SacSection)
  stack: StackConfig = Field(default_factory=StackConfig)
  demand: DemandConfig = Field(default_factory=DemandConfig)
  forecast: ForecastConfig = Field(default_factory=ForecastConfig)
  seed: int = 0
  steps: Optional[int] = Field(None, ge=1)

  @model_validator(mode="after")
  def _check_supply(self):
    total = sum(agent.capacity for agent in self.stack.agents())
    if self.demand.path is None:
      peak = self.demand.base + self.demand.daily_amplitude + 6 * self.demand.noise_std
      if peak + self.battery.max_charge > total:
        logger.warning(
          f"Stack capacity {total} MWh may not cover peak demand "
          f"{peak} MWh plus a full battery load bid."
        )
    return self

  def settings(self) -> RunSettings:
    try:
      params = self.battery.params()
    except BidsimError as err:
      raise ConfigError(str(err), "battery")
    try:
      sac = self.sac.sac_config()
    except ValueError as err:
      raise ConfigError(str(err), "sac")

    return RunSettings(
      battery=params,
      initial_soe=self.battery.initial_soe,
      horizon=self.mpc.horizon,
      grid_levels=self.mpc.grid_levels,
      sac=sac,
      forecast_mode=self.forecast.mode,
      prior_price=self.forecast.prior_price,
      steps=self.steps,
    )

  def stack_agents(self) -> list:
    return self.stack.agents()

  def demand_series(self) -> DemandSeries:
    try:
      return self.demand.series()
    except OSError as err:
      raise ConfigError(str(err), "demand.path")

def _parse_value(raw:str) -> Any:
  try:
    return json.loads(raw)
  except json.JSONDecodeError:
    return raw

def environment_overrides(environ:Mapping[str, str], prefix:str = ENV_PREFIX) -> dict:
  """Nested dict of overrides from BIDSIM_<SECTION>__<FIELD> variables."""
  overrides = {}
  for key in sorted(environ):
    if not key.startswith(prefix):
      continue
    path = [ part.lower() for part in key[len(prefix):].split("__") ]
    if not all(path):
      raise ConfigError(f"malformed override variable {key}")

    node = overrides
    for part in path[:-1]:
      node = node.setdefault(part, {})
      if not isinstance(node, dict):
        raise ConfigError(f"{key} conflicts with another override", ".".join(path))
    node[path[-1]] = _parse_value(environ[key])
  return overrides

def _merge(base:dict, overrides:dict) -> dict:
  merged = dict(base)
  for key, val in overrides.items():
    if isinstance(val, dict) and isinstance(merged.get(key), dict):
      merged[key] = _merge(merged[key], val)
    else:
      merged[key] = val
  return merged

def _error_path(err:ValidationError) -> tuple[str, str]:
  first = err.errors()[0]
  path = ".".join(str(part) for part in first["loc"])
  return first["msg"], path

def from_document(document:dict) -> ExperimentConfig:
  try:
    config = ExperimentConfig.model_validate(document)
  except ValidationError as err:
    raise ConfigError(*_error_path(err))
  config.settings()
  return config

def load_config(
  path:Optional[str] = None,
  environ:Optional[Mapping[str, str]] = None,
) -> ExperimentConfig:
  """
  Read an experiment document, apply environment overrides and validate.

  path: JSON file, None for pure defaults
  environ: defaults to os.environ

  Raises: ConfigError naming the offending field path
  """
  environ = os.environ if environ is None else environ

  document = {}
  if path is not None:
    try:
      with open(path, "rt", encoding="utf8") as f:
        document = json.load(f)
    except FileNotFoundError:
      raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
      raise ConfigError(f"{path} is not valid JSON: {err}")
    if not isinstance(document, dict):
      raise ConfigError(f"{path} must hold a JSON object")

  document = _merge(document, environment_overrides(environ))
  return from_document(document)
