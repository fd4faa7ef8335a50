"""
Supervised Actor-Critic bidding agent.

Every market step the actor proposes a bid, is pulled toward the
supervisor's bid, and is blended with it under a supervisor weight
that starts at 1 and decays to a floor. After the market clears, a
temporal difference error from the critic drives a policy gradient
step for the actor and a semi-gradient step for the critic.

Actions live in two coordinate systems:
  physical:   (bid_price $/MWh, quantity MWh, + sells, - buys)
  normalized: (2 * price / price_scale - 1, quantity / quantity_scale)
The actor's mean is tanh(network output) in normalized coordinates.
"""
from typing import Optional, Sequence

from dataclasses import dataclass, field
import logging
import math
import os

import numpy as np

from .neural import Mlp, MlpGradients, DEFAULT_EPSILON, DEFAULT_LEAK

logger = logging.getLogger(__name__)

STATE_DIM = 5
ACTION_DIM = 2

@dataclass(frozen=True)
class AgentAction:
  """
  bid_price: $/MWh
  quantity: MWh, positive sells (generation), negative buys (load)
  """
  bid_price: float
  quantity: float

  @property
  def p_g(self) -> float:
    return self.quantity if self.quantity > 0 else 0.0

  @property
  def p_l(self) -> float:
    return -self.quantity if self.quantity < 0 else 0.0

  @property
  def is_generation(self) -> bool:
    return self.quantity > 0

  @property
  def is_load(self) -> bool:
    return self.quantity < 0

  @property
  def is_idle(self) -> bool:
    return self.quantity == 0

  def floor_price(self) -> "AgentAction":
    if self.bid_price >= 0:
      return self
    return AgentAction(0.0, self.quantity)

  def __add__(self, other:"AgentAction") -> "AgentAction":
    return AgentAction(
      self.bid_price + other.bid_price,
      self.quantity + other.quantity,
    )

IDLE = AgentAction(0.0, 0.0)

@dataclass(frozen=True)
class MarketObservation:
  """
  price_forecast_now: forecast clearing price for this step ($/MWh)
  last_clearing_price: realized clearing price of the previous step ($/MWh)
  soe: battery state of energy (MWh)
  time_of_day: step index within the day
  demand_forecast: forecast system demand for this step (MWh)
  """
  price_forecast_now: float
  last_clearing_price: float
  soe: float
  time_of_day: int
  demand_forecast: float

  def __post_init__(self):
    values = (
      self.price_forecast_now, self.last_clearing_price,
      self.soe, self.time_of_day, self.demand_forecast,
    )
    if not all(math.isfinite(v) for v in values):
      raise ValueError(f"Observation components must be finite. Got: {values}")
    if int(self.time_of_day) != self.time_of_day or self.time_of_day < 0:
      raise ValueError(f"time_of_day must be a non-negative integer. Got: {self.time_of_day}")

@dataclass(frozen=True)
class ObservationScales:
  """Fixed divisors that bring observations and actions to roughly [-1,1]."""
  price_scale: float = 100.0
  demand_scale: float = 5000.0
  energy_capacity: float = 1029.0
  steps_per_day: int = 48
  quantity_scale: float = 300.0

  def state_vector(self, obs:MarketObservation) -> np.ndarray:
    if obs.time_of_day >= self.steps_per_day:
      raise ValueError(
        f"time_of_day ({obs.time_of_day}) must be less than steps_per_day ({self.steps_per_day})."
      )
    return np.array([
      obs.price_forecast_now / self.price_scale,
      obs.last_clearing_price / self.price_scale,
      obs.soe / self.energy_capacity,
      obs.time_of_day / self.steps_per_day,
      obs.demand_forecast / self.demand_scale,
    ], dtype=np.float64)

  def normalize(self, action:AgentAction) -> np.ndarray:
    return np.array([
      2.0 * action.bid_price / self.price_scale - 1.0,
      action.quantity / self.quantity_scale,
    ], dtype=np.float64)

  def denormalize(self, u:np.ndarray) -> AgentAction:
    return AgentAction(
      float((u[0] + 1.0) * 0.5 * self.price_scale),
      float(u[1] * self.quantity_scale),
    )

  def noise_to_physical(self, noise:np.ndarray) -> AgentAction:
    """A perturbation in normalized units expressed as a physical offset."""
    return AgentAction(
      float(noise[0] * 0.5 * self.price_scale),
      float(noise[1] * self.quantity_scale),
    )

@dataclass(frozen=True)
class RiskSchedule:
  """
  The supervisor weight w is 1 for the first hold_steps steps,
  then falls linearly to final_supervisor_weight over ramp_steps.
  """
  hold_steps: int = 400
  ramp_steps: int = 2000
  final_supervisor_weight: float = 0.5

  def __post_init__(self):
    if self.hold_steps < 0 or self.ramp_steps < 0:
      raise ValueError(
        f"hold_steps ({self.hold_steps}) and ramp_steps ({self.ramp_steps}) must be >= 0."
      )
    if not (0.5 <= self.final_supervisor_weight <= 1.0):
      raise ValueError(
        f"final_supervisor_weight must lie in [0.5, 1]. Got: {self.final_supervisor_weight}"
      )

@dataclass(frozen=True)
class SacConfig:
  gamma: float = 0.98
  sigma_explore: float = 1.0
  sigma_explore_final: float = 0.02
  explore_decay_steps: Optional[int] = None
  sigma_policy: float = 1.0
  alpha: float = 1e-4
  beta1: float = 1e-4
  beta2: float = 1e-4
  mu: tuple = (-10.0, -10.0, -10.0, -10.0)
  schedule: RiskSchedule = field(default_factory=RiskSchedule)
  hidden_layers: int = 6
  hidden_width: int = 64
  leak: float = DEFAULT_LEAK
  adagrad_epsilon: float = DEFAULT_EPSILON
  reward_scale: float = 30000.0
  literal_reward: bool = False

  def __post_init__(self):
    if not (0 <= self.gamma <= 1):
      raise ValueError(f"gamma must lie in [0,1]. Got: {self.gamma}")
    for name in (
      "alpha", "beta1", "beta2", "sigma_explore", "sigma_explore_final",
      "sigma_policy", "reward_scale",
    ):
      if not getattr(self, name) > 0:
        raise ValueError(f"{name} must be positive. Got: {getattr(self, name)}")
    if self.explore_decay_steps is not None and self.explore_decay_steps < 0:
      raise ValueError(f"explore_decay_steps must be >= 0. Got: {self.explore_decay_steps}")
    if any(m > 0 for m in self.mu):
      raise ValueError(f"Penalty weights mu must be <= 0. Got: {self.mu}")

  def layer_dims(self, input_dim:int, output_dim:int) -> list:
    return [ input_dim ] + [ self.hidden_width ] * self.hidden_layers + [ output_dim ]

def supervisor_weight(step:int, schedule:RiskSchedule) -> float:
  if step < schedule.hold_steps:
    return 1.0
  if schedule.ramp_steps == 0:
    return schedule.final_supervisor_weight

  progress = min((step - schedule.hold_steps) / schedule.ramp_steps, 1.0)
  return 1.0 - progress * (1.0 - schedule.final_supervisor_weight)

def exploration_sigma(step:int, config:SacConfig) -> float:
  """
  Exploration std in normalized action units at a market step.

  Decays geometrically from sigma_explore to sigma_explore_final over
  explore_decay_steps, which defaults to the end of the supervisor
  weight ramp, and stays there.
  """
  start = config.sigma_explore
  final = min(config.sigma_explore_final, start)
  decay_steps = config.explore_decay_steps
  if decay_steps is None:
    decay_steps = config.schedule.hold_steps + config.schedule.ramp_steps
  if decay_steps == 0:
    return final

  progress = min(max(step, 0) / decay_steps, 1.0)
  return start * (final / start) ** progress

def blend_action(
  a_actor:AgentAction,
  a_explore_noise:AgentAction,
  a_supervisor:AgentAction,
  supervisor_weight:float,
) -> AgentAction:
  """
  (1 - w) * (a_actor + a_explore_noise) + w * a_supervisor

  The map between physical and normalized coordinates is affine
  per component, so the convex combination is taken directly in
  physical units. w = 1 reproduces the supervisor bit for bit.
  """
  w = float(supervisor_weight)
  if not (0 <= w <= 1):
    raise ValueError(f"supervisor_weight must lie in [0,1]. Got: {w}")

  explored = a_actor + a_explore_noise
  return AgentAction(
    (1.0 - w) * explored.bid_price + w * a_supervisor.bid_price,
    (1.0 - w) * explored.quantity + w * a_supervisor.quantity,
  )

def td_error(reward:float, value_s:float, value_s_next:float, gamma:float) -> float:
  return reward + gamma * value_s_next - value_s

def reward(
  action_executed:AgentAction,
  observation:MarketObservation,
  cleared_revenue:float,
  violations:Sequence[float],
  mu:Sequence[float],
  literal:bool = False,
) -> float:
  """
  Revenue plus a Lagrangian style penalty mu . violations, mu <= 0.

  cleared_revenue: settlement actually realized at the clearing price
  literal: use forecast price times the bid quantity instead of the
    settlement as the revenue term
  """
  if literal:
    revenue = observation.price_forecast_now * action_executed.quantity
  else:
    revenue = cleared_revenue

  penalty = float(np.dot(np.asarray(mu, dtype=np.float64), np.asarray(violations, dtype=np.float64)))
  return revenue + penalty

class SupervisedActorCritic:
  """
  Online learner with one actor network (bid mean) and one
  critic network (state value). Both use Adagrad.
  """
  def __init__(self,
    config:SacConfig = SacConfig(),
    scales:ObservationScales = ObservationScales(),
    seed:Optional[int] = None,
    actor:Optional[Mlp] = None,
    critic:Optional[Mlp] = None,
  ):
    self.config = config
    self.scales = scales
    self.rng = np.random.default_rng(seed)

    actor_seed, critic_seed = self.rng.integers(0, 2**32, size=2)

    if actor is None:
      actor = Mlp(
        config.layer_dims(STATE_DIM, ACTION_DIM),
        leak=config.leak, seed=int(actor_seed)
      )
    if critic is None:
      critic = Mlp(
        config.layer_dims(STATE_DIM, 1),
        leak=config.leak, seed=int(critic_seed)
      )

    self.actor = actor
    self.critic = critic

  def _state(self, observation:MarketObservation) -> np.ndarray:
    return self.scales.state_vector(observation)

  def mean_normalized(self, observation:MarketObservation) -> np.ndarray:
    return np.tanh(self.actor.forward(self._state(observation)))

  def actor_mean(self, observation:MarketObservation) -> AgentAction:
    return self.scales.denormalize(self.mean_normalized(observation))

  def value(self, observation:MarketObservation) -> float:
    return float(self.critic.forward(self._state(observation))[0])

  def sample_noise(self, step:Optional[int] = None) -> np.ndarray:
    """
    Exploration perturbation in normalized action units, drawn with
    sigma_explore or, given a market step, with the decayed std.
    """
    sigma = self.config.sigma_explore
    if step is not None:
      sigma = exploration_sigma(step, self.config)
    return self.rng.normal(0.0, sigma, size=ACTION_DIM)

  def supervision_gradient(
    self, observation:MarketObservation, supervisor_action:AgentAction
  ) -> tuple[float, MlpGradients]:
    """
    F_a = 0.5 * || a_actor - a_supervisor ||^2 in normalized units.

    Returns: (F_a, dF_a/dtheta)
    """
    x = self._state(observation)
    u = np.tanh(self.actor.forward(x))
    diff = u - self.scales.normalize(supervisor_action)
    loss = 0.5 * float(np.dot(diff, diff))
    grads = self.actor.backward(x, diff * (1.0 - u * u))
    return loss, grads

  def supervise_actor(
    self, observation:MarketObservation, supervisor_action:AgentAction
  ) -> float:
    """One descent step on F_a. Returns the loss before the step."""
    loss, grads = self.supervision_gradient(observation, supervisor_action)
    if loss > 0:
      self.actor.adagrad_step(grads.scale(-1.0), self.config.beta1, self.config.adagrad_epsilon)
    return loss

  def value_gradient(self, observation:MarketObservation) -> MlpGradients:
    return self.critic.backward(self._state(observation), np.ones((1,)))

  def critic_update(self, observation:MarketObservation, delta:float) -> None:
    """
    Semi-gradient TD step: the bootstrapped target is held fixed,
    so descending 0.5 * delta^2 moves omega along delta * grad V(s).
    """
    if delta == 0:
      return
    grads = self.value_gradient(observation)
    self.critic.adagrad_step(grads.scale(delta), self.config.alpha, self.config.adagrad_epsilon)

  def log_policy_gradient(
    self, observation:MarketObservation, executed_actor_component:np.ndarray
  ) -> MlpGradients:
    """
    Score of a Gaussian policy centred on the actor mean:
    grad ln pi = ((a - mean) / sigma^2) * grad mean
    """
    x = self._state(observation)
    mean = np.tanh(self.actor.forward(x))
    a = np.asarray(executed_actor_component, dtype=np.float64)
    score = (a - mean) / (self.config.sigma_policy ** 2)
    return self.actor.backward(x, score * (1.0 - mean * mean))

  def actor_pg_update(
    self, observation:MarketObservation,
    executed_actor_component:np.ndarray,
    delta:float,
  ) -> None:
    """theta += beta2 * delta * grad ln pi(a | s)"""
    if delta == 0:
      return
    grads = self.log_policy_gradient(observation, executed_actor_component)
    self.actor.adagrad_step(grads.scale(delta), self.config.beta2, self.config.adagrad_epsilon)

  def save(self, directory:str) -> None:
    from .util import save

    os.makedirs(directory, exist_ok=True)
    save(os.path.join(directory, "actor.nn"), self.actor)
    save(os.path.join(directory, "critic.nn"), self.critic)

  @classmethod
  def load(kls,
    directory:str,
    config:SacConfig = SacConfig(),
    scales:ObservationScales = ObservationScales(),
    seed:Optional[int] = None,
  ) -> "SupervisedActorCritic":
    from .util import load

    actor = load(os.path.join(directory, "actor.nn"))
    critic = load(os.path.join(directory, "critic.nn"))
    logger.info(f"Resumed actor and critic from {directory}")
    return SupervisedActorCritic(config, scales, seed=seed, actor=actor, critic=critic)
