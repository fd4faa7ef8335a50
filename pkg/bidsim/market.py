"""
Uniform-price clearing of an energy-only market.

Sellers submit a single (price, quantity) block each. The operator
dispatches blocks in merit order, cheapest first, until the inelastic
demand is met. Every dispatched seller is paid the price of the
marginal block, not their own offer.
"""
from typing import Hashable, Iterable, Optional

from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import InvalidBid, InvalidDemand, InsufficientSupply

@dataclass(frozen=True)
class SupplyBid:
  """
  One seller's offer.

  agent_id: any hashable identifier
  price: $/MWh
  quantity: MWh offered for this step
  """
  agent_id: Hashable
  price: float
  quantity: float

  def validate(self) -> "SupplyBid":
    if not (math.isfinite(self.price) and self.price >= 0):
      raise InvalidBid(
        f"Bid from {self.agent_id!r} has price {self.price}, it must be finite and >= 0."
      )
    if not (math.isfinite(self.quantity) and self.quantity >= 0):
      raise InvalidBid(
        f"Bid from {self.agent_id!r} has quantity {self.quantity}, it must be finite and >= 0."
      )
    return self

@dataclass(frozen=True)
class ClearingOutcome:
  clearing_price: float
  dispatch: dict = field(default_factory=dict)
  served_demand: float = 0.0

  def dispatched(self, agent_id:Hashable) -> float:
    return self.dispatch.get(agent_id, 0.0)

  def payment(self, agent_id:Hashable) -> float:
    """Cash paid to a seller. Every seller receives the clearing price."""
    return self.clearing_price * self.dispatched(agent_id)

  def payments(self) -> dict:
    return {
      agent_id: self.clearing_price * qty
      for agent_id, qty in self.dispatch.items()
    }

def _check_demand(demand:float) -> float:
  if not (math.isfinite(demand) and demand >= 0):
    raise InvalidDemand(f"Demand must be finite and >= 0. Got: {demand}")
  return float(demand)

def merit_order(bids:Iterable[SupplyBid]) -> tuple[np.ndarray, np.ndarray]:
  """
  Aggregate supply curve.

  Returns: (price levels ascending, cumulative capacity at each level)
  """
  bids = [ bid.validate() for bid in bids ]
  if len(bids) == 0:
    return np.zeros((0,), dtype=np.float64), np.zeros((0,), dtype=np.float64)

  prices = np.array([ bid.price for bid in bids ], dtype=np.float64)
  quantities = np.array([ bid.quantity for bid in bids ], dtype=np.float64)

  levels, inverse = np.unique(prices, return_inverse=True)
  level_capacity = np.zeros(levels.shape, dtype=np.float64)
  np.add.at(level_capacity, inverse, quantities)
  return levels, np.cumsum(level_capacity)

def clear_market(bids:Iterable[SupplyBid], demand:float) -> ClearingOutcome:
  """
  Merit order dispatch of single block supply bids against an
  inelastic demand.

  Bids sharing the marginal price split the residual demand pro-rata
  by their offered quantity, which makes the result independent of
  the order the bids are given in.

  A demand of zero clears at a price of zero with nothing dispatched.

  Returns: ClearingOutcome
  """
  bids = [ bid.validate() for bid in bids ]
  demand = _check_demand(demand)

  dispatch = { bid.agent_id: 0.0 for bid in bids }

  if demand == 0:
    return ClearingOutcome(clearing_price=0.0, dispatch=dispatch, served_demand=0.0)

  levels, cumulative = merit_order(bids)
  total = cumulative[-1] if cumulative.size else 0.0

  if total < demand:
    raise InsufficientSupply(
      f"Total offered quantity ({total} MWh) is less than demand ({demand} MWh)."
    )

  marginal = int(np.searchsorted(cumulative, demand, side='left'))
  clearing_price = float(levels[marginal])
  filled = float(cumulative[marginal - 1]) if marginal > 0 else 0.0
  marginal_capacity = float(cumulative[marginal]) - filled
  residual = min(max(demand - filled, 0.0), marginal_capacity)

  for bid in bids:
    if bid.price < clearing_price:
      dispatch[bid.agent_id] += bid.quantity
    elif bid.price == clearing_price and bid.quantity > 0:
      if residual == marginal_capacity:
        dispatch[bid.agent_id] += bid.quantity
      else:
        dispatch[bid.agent_id] += residual * (bid.quantity / marginal_capacity)

  return ClearingOutcome(
    clearing_price=clearing_price,
    dispatch=dispatch,
    served_demand=demand,
  )

def effective_demand(base_demand:float, battery_load_bid:float) -> float:
  """A battery load bid is simply added to the system load."""
  return float(base_demand + battery_load_bid)

def dispatch_cost(bids:Iterable[SupplyBid], outcome:ClearingOutcome) -> float:
  """Social cost of a dispatch: sum of offer price times dispatched quantity."""
  return math.fsum(
    bid.price * outcome.dispatched(bid.agent_id)
    for bid in bids
  )
