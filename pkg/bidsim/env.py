"""
Market simulation loop.

Each step: forecast prices, ask the MPC supervisor for a bid,
optionally let the actor-critic propose and blend its own bid,
shield it, clear the market (a generation bid joins the supply
stack, a load bid is added to demand), settle the battery at the
clearing price, advance its state of energy and, for the learner,
apply the critic and actor updates.
"""
from typing import Hashable, Literal, Optional, Sequence

from dataclasses import dataclass, field
import logging
import math

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import agent as sac
from . import formats
from .agent import (
  AgentAction, MarketObservation, ObservationScales,
  SacConfig, SupervisedActorCritic,
)
from .battery import (
  BatteryParams, BatteryState, constraint_violations,
  is_safe_action, shield, step_soe,
)
from .exceptions import InfeasibleTransition
from .lib import moving_average, percentage
from .market import SupplyBid, clear_market, effective_demand
from .mpc import (
  DEFAULT_GRID_LEVELS, DEFAULT_HORIZON,
  PriceForecast, supervisor_action,
)

logger = logging.getLogger(__name__)

BATTERY_ID = "battery"
POLICIES = ("mpc", "sac")

@dataclass(frozen=True)
class BackgroundAgent:
  """A generator offering a fixed quantity at a fixed marginal cost every step."""
  agent_id: Hashable
  marginal_cost: float
  capacity: float

  def bid(self) -> SupplyBid:
    return SupplyBid(self.agent_id, self.marginal_cost, self.capacity)

def default_stack(
  count:int = 10,
  cost_step:float = 10.0,
  capacity:float = 500.0,
) -> list:
  """Generators with marginal costs cost_step, 2*cost_step, ... and equal capacity."""
  return [
    BackgroundAgent(f"gen{i+1:02d}", cost_step * (i + 1), capacity)
    for i in range(count)
  ]

@dataclass(frozen=True)
class DemandSeries:
  timestamps: pd.DatetimeIndex
  demand: np.ndarray
  steps_per_day: int = 48

  def __post_init__(self):
    demand = np.asarray(self.demand, dtype=np.float64).reshape(-1)
    timestamps = pd.DatetimeIndex(self.timestamps)
    if demand.size != len(timestamps):
      raise ValueError(
        f"{demand.size} demand values do not match {len(timestamps)} timestamps."
      )
    if not np.all(np.isfinite(demand)) or np.any(demand < 0):
      raise ValueError("Demand values must be finite and >= 0.")
    if self.steps_per_day < 1:
      raise ValueError(f"steps_per_day must be >= 1. Got: {self.steps_per_day}")
    object.__setattr__(self, "demand", demand)
    object.__setattr__(self, "timestamps", timestamps)

  def __len__(self) -> int:
    return self.demand.size

  @property
  def days(self) -> float:
    return len(self) / self.steps_per_day

  def head(self, steps:int) -> "DemandSeries":
    return DemandSeries(self.timestamps[:steps], self.demand[:steps], self.steps_per_day)

def synth_demand(
  days:int,
  steps_per_day:int = 48,
  base:float = 2500.0,
  daily_amplitude:float = 1500.0,
  noise_std:float = 100.0,
  seed:Optional[int] = 0,
  phase:float = math.pi,
  start:str = "2018-06-01",
) -> DemandSeries:
  """
  base + daily_amplitude * sin(2 pi t_day / steps_per_day - phase) + noise

  With the default phase the daily peak falls at 18:00.
  Gaussian noise is drawn from a seeded generator and the result is
  clamped at zero.
  """
  if days < 1 or steps_per_day < 1:
    raise ValueError(f"days ({days}) and steps_per_day ({steps_per_day}) must be >= 1.")

  steps = days * steps_per_day
  t_day = np.arange(steps) % steps_per_day
  rng = np.random.default_rng(seed)

  demand = base + daily_amplitude * np.sin(2 * np.pi * t_day / steps_per_day - phase)
  if noise_std > 0:
    demand = demand + rng.normal(0.0, noise_std, size=steps)
  demand = np.maximum(demand, 0.0)

  timestamps = pd.date_range(
    start=pd.Timestamp(start), periods=steps,
    freq=pd.Timedelta(days=1) / steps_per_day,
  )
  return DemandSeries(timestamps, demand, steps_per_day)

def load_demand_csv(path:str, steps_per_day:Optional[int] = None) -> DemandSeries:
  return formats.from_demand_csv(path, steps_per_day=steps_per_day)

def write_demand_csv(series:DemandSeries, path:str):
  with open(path, "wt", encoding="utf8", newline="") as f:
    f.write(formats.to_demand_csv(series))

def forecast_prices(
  history:Sequence[float],
  horizon:int,
  steps_per_day:int,
  prior:float,
) -> PriceForecast:
  """
  Persistence forecast: each future step takes the realized price
  of the same time of day on the most recent day already observed.
  Steps with no such day yet take the prior.

  history: realized clearing prices, one per elapsed step
  """
  if horizon < 1:
    raise ValueError(f"horizon must be >= 1. Got: {horizon}")

  history = np.asarray(history, dtype=np.float64)
  t = history.size
  h = np.arange(horizon)
  idx = t + h - steps_per_day * (h // steps_per_day + 1)
  known = idx >= 0
  prices = np.full((horizon,), float(prior))
  prices[known] = history[idx[known]]
  return PriceForecast(prices)

class PriceForecaster:
  """
  mode:
    'persistence': see forecast_prices
    'perfect': realized prices of a reference series (e.g. the market
      cleared with the battery idle), repeating its last observed day
      past the end of the series.
  """
  def __init__(self,
    horizon:int,
    steps_per_day:int,
    prior:float,
    mode:Literal['persistence', 'perfect'] = 'persistence',
    realized:Optional[np.ndarray] = None,
  ):
    if mode not in ('persistence', 'perfect'):
      raise ValueError(f"Unknown forecast mode: {mode}")
    if mode == 'perfect' and realized is None:
      raise ValueError("Perfect foresight needs a realized price series.")

    self.horizon = int(horizon)
    self.steps_per_day = int(steps_per_day)
    self.prior = float(prior)
    self.mode = mode
    self.realized = None if realized is None else np.asarray(realized, dtype=np.float64)

  def forecast(self, history:Sequence[float]) -> PriceForecast:
    if self.mode == 'persistence':
      return forecast_prices(history, self.horizon, self.steps_per_day, self.prior)

    T = self.realized.size
    idx = len(history) + np.arange(self.horizon)
    beyond = idx >= T
    idx[beyond] -= self.steps_per_day * ((idx[beyond] - T) // self.steps_per_day + 1)
    idx = np.maximum(idx, 0)
    return PriceForecast(self.realized[idx])

def background_prices(demand:DemandSeries, stack:Sequence[BackgroundAgent]) -> np.ndarray:
  """Clearing prices with the battery idle."""
  bids = [ agent.bid() for agent in stack ]
  return np.array([
    clear_market(bids, d).clearing_price for d in demand.demand
  ], dtype=np.float64)

@dataclass(frozen=True)
class RunSettings:
  battery: BatteryParams = BatteryParams()
  initial_soe: Optional[float] = None
  horizon: int = DEFAULT_HORIZON
  grid_levels: int = DEFAULT_GRID_LEVELS
  sac: SacConfig = field(default_factory=SacConfig)
  forecast_mode: str = 'persistence'
  prior_price: Optional[float] = None
  steps: Optional[int] = None

  def scales(self, stack:Sequence[BackgroundAgent], steps_per_day:int) -> ObservationScales:
    return ObservationScales(
      price_scale=max(agent.marginal_cost for agent in stack) or 1.0,
      demand_scale=sum(agent.capacity for agent in stack) or 1.0,
      energy_capacity=self.battery.energy_capacity,
      steps_per_day=steps_per_day,
      quantity_scale=self.battery.max_quantity,
    )

  def prior(self, stack:Sequence[BackgroundAgent]) -> float:
    if self.prior_price is not None:
      return float(self.prior_price)
    costs = [ agent.marginal_cost for agent in stack ]
    return (min(costs) + max(costs)) / 2.0

@dataclass
class RunMetrics:
  avg_revenue_per_day: float
  pct_bid_capacity_cleared: float
  pct_preshield_violations: float
  pct_generator_bids: float
  cumulative_revenue_series: np.ndarray
  clearing_price_series: np.ndarray
  soe_series: np.ndarray
  bid_series: np.ndarray
  trace: dict
  steps_per_day: int
  interventions: int = 0
  post_shield_violations: int = 0

  @property
  def steps(self) -> int:
    return self.cumulative_revenue_series.size

  @property
  def days(self) -> float:
    return self.steps / self.steps_per_day

  @property
  def total_revenue(self) -> float:
    if self.steps == 0:
      return 0.0
    return float(self.cumulative_revenue_series[-1])

  def revenue_rate(self, window:Optional[int] = None) -> np.ndarray:
    """Moving average of per step settlement, scaled to $/day."""
    window = window or self.steps_per_day
    return moving_average(self.trace["settlement"], window) * self.steps_per_day

  def daily_revenue(self) -> np.ndarray:
    """Settlement summed per calendar day; a trailing partial day is kept."""
    settlement = self.trace["settlement"]
    day = np.arange(settlement.size) // self.steps_per_day
    return np.bincount(day, weights=settlement)

  def revenue_per_day_after(self, step:int) -> float:
    """Average revenue per day earned from `step` to the end of the run."""
    if step >= self.steps:
      return 0.0
    before = self.cumulative_revenue_series[step - 1] if step > 0 else 0.0
    return float(self.total_revenue - before) / ((self.steps - step) / self.steps_per_day)

  def summary(self) -> dict:
    from . import __version__

    return {
      "avg_revenue_per_day": self.avg_revenue_per_day,
      "pct_bid_capacity_cleared": self.pct_bid_capacity_cleared,
      "pct_preshield_violations": self.pct_preshield_violations,
      "pct_generator_bids": self.pct_generator_bids,
      "total_revenue": self.total_revenue,
      "steps": self.steps,
      "days": self.days,
      "interventions": self.interventions,
      "post_shield_violations": self.post_shield_violations,
      "version": __version__,
    }

def _observe(t, forecast, prices, prior, soe, demand, steps_per_day):
  return MarketObservation(
    price_forecast_now=float(forecast.prices[0]),
    last_clearing_price=float(prices[t-1]) if t > 0 else prior,
    soe=soe,
    time_of_day=t % steps_per_day,
    demand_forecast=float(demand[min(t, demand.size - 1)]),
  )

def run_simulation(
  policy:str,
  demand:DemandSeries,
  stack:Sequence[BackgroundAgent],
  settings:RunSettings = RunSettings(),
  seed:Optional[int] = 0,
  learner:Optional[SupervisedActorCritic] = None,
  progress:bool = False,
  force_idle:bool = False,
) -> RunMetrics:
  """
  Simulate the market with the battery bidding under `policy`
  ('mpc' for the supervisor alone, 'sac' for the supervised
  actor-critic).

  learner: continue training an existing agent instead of a fresh one
  force_idle: keep the battery out of the market (baseline prices)

  Returns: RunMetrics
  """
  if policy not in POLICIES:
    raise ValueError(f"policy must be one of {POLICIES}. Got: {policy}")
  if len(demand) == 0:
    raise ValueError("Demand series is empty.")
  if len(stack) == 0:
    raise ValueError("Background stack is empty.")

  if settings.steps is not None:
    demand = demand.head(settings.steps)

  T = len(demand)
  spd = demand.steps_per_day
  loads = demand.demand
  params = settings.battery
  stack_bids = [ agent.bid() for agent in stack ]
  prior = settings.prior(stack)

  realized = None
  if settings.forecast_mode == 'perfect':
    realized = background_prices(demand, stack)
  forecaster = PriceForecaster(settings.horizon, spd, prior, settings.forecast_mode, realized)

  learning = (policy == "sac") and not force_idle
  if learning and learner is None:
    learner = SupervisedActorCritic(settings.sac, settings.scales(stack, spd), seed=seed)
  config = settings.sac
  if learning and config.schedule.hold_steps >= T:
    logger.warning(
      f"The supervisor weight stays at 1 for the whole run "
      f"({T} steps <= {config.schedule.hold_steps} hold steps)."
    )

  initial_soe = params.soe_floor if settings.initial_soe is None else settings.initial_soe
  battery = BatteryState(float(initial_soe), params)

  prices = np.zeros((T,), dtype=np.float64)
  trace = {
    name: np.zeros((T,), dtype=np.float64)
    for name in (
      "supervisor_weight", "explore_sigma", "preshield_price", "preshield_quantity",
      "bid_price", "bid_quantity", "td_error", "reward", "soe",
      "clearing_price", "dispatched_generation", "load", "settlement",
    )
  }
  trace["step"] = np.arange(T, dtype=np.int64)
  trace["intervened"] = np.zeros((T,), dtype=bool)
  trace["postshield_unsafe"] = np.zeros((T,), dtype=bool)
  preshield_unsafe = np.zeros((T,), dtype=bool)

  logger.info(f"Starting {policy} run: {T} steps, seed {seed}.")

  forecast = forecaster.forecast(prices[:0])
  for t in tqdm(range(T), disable=not progress, desc=policy):
    obs = _observe(t, forecast, prices, prior, battery.soe, loads, spd)

    a_supervisor = supervisor_action(obs, params, forecast, settings.grid_levels)
    w = 1.0
    sigma = 0.0
    td = math.nan
    step_reward = math.nan

    if force_idle:
      proposed = executed = AgentAction(a_supervisor.bid_price, 0.0)
      intervened = False
    elif learning:
      w = sac.supervisor_weight(t, config.schedule)
      a_actor = learner.actor_mean(obs)
      learner.supervise_actor(obs, a_supervisor)
      sigma = sac.exploration_sigma(t, config)
      a_noise = learner.scales.noise_to_physical(learner.sample_noise(t))
      explored = a_actor + a_noise
      proposed = sac.blend_action(a_actor, a_noise, a_supervisor, w).floor_price()
      violations = constraint_violations(battery, proposed.p_g, proposed.p_l)
      executed, intervened = shield(battery, proposed, a_supervisor)
      if intervened:
        logger.debug(f"step {t}: shield replaced {proposed} with {executed}")
    else:
      proposed = executed = a_supervisor
      intervened = False

    preshield_unsafe[t] = not is_safe_action(battery, proposed)
    trace["postshield_unsafe"][t] = not is_safe_action(battery, executed)
    if trace["postshield_unsafe"][t]:
      raise InfeasibleTransition(f"step {t}: executed action {executed} is unsafe at soe={battery.soe}")

    bids = list(stack_bids)
    if executed.p_g > 0:
      bids.append(SupplyBid(BATTERY_ID, executed.bid_price, executed.p_g))
    outcome = clear_market(bids, effective_demand(loads[t], executed.p_l))

    price = outcome.clearing_price
    dispatched = outcome.dispatched(BATTERY_ID)
    settlement = price * dispatched - price * executed.p_l
    battery = step_soe(battery, dispatched, executed.p_l)
    prices[t] = price

    next_forecast = forecaster.forecast(prices[:t+1])

    if learning:
      step_reward = sac.reward(
        executed, obs, settlement, violations, config.mu, literal=config.literal_reward
      )
      next_obs = _observe(t + 1, next_forecast, prices, prior, battery.soe, loads, spd)
      td = sac.td_error(
        step_reward / config.reward_scale,
        learner.value(obs), learner.value(next_obs), config.gamma,
      )
      learner.actor_pg_update(obs, learner.scales.normalize(explored), td)
      learner.critic_update(obs, td)

    trace["supervisor_weight"][t] = w
    trace["explore_sigma"][t] = sigma
    trace["preshield_price"][t] = proposed.bid_price
    trace["preshield_quantity"][t] = proposed.quantity
    trace["bid_price"][t] = executed.bid_price
    trace["bid_quantity"][t] = executed.quantity
    trace["intervened"][t] = intervened
    trace["td_error"][t] = td
    trace["reward"][t] = step_reward
    trace["soe"][t] = battery.soe
    trace["clearing_price"][t] = price
    trace["dispatched_generation"][t] = dispatched
    trace["load"][t] = executed.p_l
    trace["settlement"][t] = settlement

    forecast = next_forecast

  metrics = _metrics(trace, preshield_unsafe, spd)
  logger.info(
    f"Finished {policy} run: {metrics.avg_revenue_per_day:.2f} $/day, "
    f"{metrics.interventions} shield interventions."
  )
  return metrics

def _metrics(trace:dict, preshield_unsafe:np.ndarray, steps_per_day:int) -> RunMetrics:
  T = trace["step"].size
  quantity = trace["bid_quantity"]
  generation = quantity > 0
  bidding = quantity != 0

  cleared = np.zeros((T,), dtype=np.float64)
  cleared[generation] = trace["dispatched_generation"][generation] / quantity[generation]
  cleared[quantity < 0] = 1.0

  cumulative = np.cumsum(trace["settlement"])
  days = T / steps_per_day

  return RunMetrics(
    avg_revenue_per_day=float(cumulative[-1] / days),
    pct_bid_capacity_cleared=(
      percentage(float(np.sum(cleared[bidding])), int(np.sum(bidding)))
    ),
    pct_preshield_violations=percentage(int(np.sum(preshield_unsafe)), T),
    pct_generator_bids=percentage(int(np.sum(generation)), int(np.sum(bidding))),
    cumulative_revenue_series=cumulative,
    clearing_price_series=np.copy(trace["clearing_price"]),
    soe_series=np.copy(trace["soe"]),
    bid_series=np.copy(quantity),
    trace=trace,
    steps_per_day=steps_per_day,
    interventions=int(np.sum(trace["intervened"])),
    post_shield_violations=int(np.sum(trace["postshield_unsafe"])),
  )
