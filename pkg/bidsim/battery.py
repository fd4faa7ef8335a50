"""
Grid scale storage plant and the safety shield.

State of energy evolves as

  soe' = soe - eta_discharge * p_g + eta_charge * p_l

with p_g the energy sold (generation) and p_l the energy bought (load)
during one market step. At most one of the two is nonzero.
"""
from typing import Any

from dataclasses import dataclass, replace
import math

import numpy as np

from .exceptions import (
  InvalidBatteryParams, InfeasibleTransition, UnsafeSupervisor
)

# absorbs float round off at the SOE bounds
SOE_TOLERANCE = 1e-9

VIOLATION_ROWS = (
  "charge_rate", "discharge_rate", "above_capacity", "below_floor",
)

@dataclass(frozen=True)
class BatteryParams:
  """
  energy_capacity: MWh, upper bound on the state of energy
  soe_floor: MWh, lower bound on the state of energy
  max_charge: MWh that may be bought in a single step
  max_discharge: MWh that may be sold in a single step
  eta_charge, eta_discharge: efficiencies in (0,1]
  """
  energy_capacity: float = 1029.0
  soe_floor: float = 0.0
  max_charge: float = 300.0
  max_discharge: float = 300.0
  eta_charge: float = 1.0
  eta_discharge: float = 1.0

  def __post_init__(self):
    for name in (
      "energy_capacity", "soe_floor", "max_charge",
      "max_discharge", "eta_charge", "eta_discharge"
    ):
      val = getattr(self, name)
      if not math.isfinite(val):
        raise InvalidBatteryParams(f"{name} must be finite. Got: {val}")

    if not (0 <= self.soe_floor < self.energy_capacity):
      raise InvalidBatteryParams(
        f"Require 0 <= soe_floor ({self.soe_floor}) < energy_capacity ({self.energy_capacity})."
      )
    if self.max_charge <= 0 or self.max_discharge <= 0:
      raise InvalidBatteryParams(
        f"max_charge ({self.max_charge}) and max_discharge ({self.max_discharge}) must be positive."
      )
    for name in ("eta_charge", "eta_discharge"):
      eta = getattr(self, name)
      if not (0 < eta <= 1):
        raise InvalidBatteryParams(f"{name} must lie in (0,1]. Got: {eta}")

  @property
  def max_quantity(self) -> float:
    return max(self.max_charge, self.max_discharge)

@dataclass(frozen=True)
class BatteryState:
  soe: float
  params: BatteryParams = BatteryParams()

  def in_bounds(self) -> bool:
    return within_bounds(self.soe, self.params)

  def next_soe(self, p_g:float, p_l:float) -> float:
    return (
      self.soe
      - self.params.eta_discharge * p_g
      + self.params.eta_charge * p_l
    )

def within_bounds(soe:float, params:BatteryParams) -> bool:
  return (
    params.soe_floor - SOE_TOLERANCE <= soe <= params.energy_capacity + SOE_TOLERANCE
  )

def step_soe(state:BatteryState, p_g:float, p_l:float) -> BatteryState:
  """
  Advance the state of energy by one step.

  Raises InfeasibleTransition if the result leaves the
  [soe_floor, energy_capacity] interval or if both p_g
  and p_l are nonzero.
  """
  if p_g < 0 or p_l < 0 or (p_g > 0 and p_l > 0):
    raise InfeasibleTransition(
      f"Invalid transition p_g={p_g} p_l={p_l}: both must be >= 0 and at most one nonzero."
    )

  soe = state.next_soe(p_g, p_l)
  params = state.params
  if not within_bounds(soe, params):
    raise InfeasibleTransition(
      f"State of energy {state.soe} -> {soe} leaves "
      f"[{params.soe_floor}, {params.energy_capacity}] (p_g={p_g}, p_l={p_l})."
    )

  soe = min(max(soe, params.soe_floor), params.energy_capacity)
  return replace(state, soe=soe)

def is_safe(state:BatteryState, p_g:float, p_l:float) -> bool:
  params = state.params
  if not (math.isfinite(p_g) and math.isfinite(p_l)):
    return False
  if p_g < 0 or p_l < 0 or (p_g > 0 and p_l > 0):
    return False
  if p_l > params.max_charge + SOE_TOLERANCE:
    return False
  if p_g > params.max_discharge + SOE_TOLERANCE:
    return False
  return within_bounds(state.next_soe(p_g, p_l), params)

def is_safe_action(state:BatteryState, action:Any) -> bool:
  return is_safe(state, action.p_g, action.p_l)

def constraint_violations(state:BatteryState, p_g:float, p_l:float) -> np.ndarray:
  """
  Magnitudes (MWh) by which a charge/discharge pair breaks
  each physical limit, in VIOLATION_ROWS order.
  All zero iff the pair is safe.
  """
  params = state.params
  soe = state.next_soe(p_g, p_l)
  violations = np.array([
    max(p_l - params.max_charge, 0.0),
    max(p_g - params.max_discharge, 0.0),
    max(soe - params.energy_capacity, 0.0),
    max(params.soe_floor - soe, 0.0),
  ], dtype=np.float64)
  violations[violations <= SOE_TOLERANCE] = 0.0
  return violations

def shield(state:BatteryState, proposed:Any, supervisor:Any) -> tuple[Any, bool]:
  """
  Let a proposed action through if it is physically feasible,
  otherwise substitute the supervisor's action.

  Only the quantity is checked. The offer price is not a physical
  quantity and passes unchanged.

  Returns: (executed action, intervened)
  """
  if is_safe_action(state, proposed):
    return proposed, False

  if not is_safe_action(state, supervisor):
    raise UnsafeSupervisor(
      f"Supervisor action {supervisor} is unsafe at soe={state.soe}."
    )

  return supervisor, True
