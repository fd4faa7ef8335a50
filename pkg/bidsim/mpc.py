"""
Price-taker model predictive control for the battery.

Given a clearing price forecast over H steps, find the charge /
discharge schedule with the largest revenue

  sum_t forecast[t] * (p_g[t] - p_l[t])

subject to the battery dynamics and limits. The state of energy is
discretized with spacing

  (energy_capacity - soe_floor) / (grid_levels - 1)

An action changes the state of energy by a whole number of spacings
within the rate limits, clipped at the floor and the capacity. The
states reachable from soe0 are the global grid plus, when partial
clearing has left the battery between grid points, the grid shifted
onto soe0. Idle is always available and the best revenue never
decreases as soe0 grows. The problem is solved exactly over that
action set by dynamic programming.

Only the first step of the plan is bid; the problem is re-solved at
every market step.
"""
from typing import Sequence

from dataclasses import dataclass
import math

import numpy as np
import networkx as nx

from .agent import AgentAction, MarketObservation
from .battery import BatteryParams, SOE_TOLERANCE
from .exceptions import InfeasibleStart, OracleTooLarge

DEFAULT_GRID_LEVELS = 344
DEFAULT_HORIZON = 48
ORACLE_LIMIT = 10 ** 6

# relative slack for treating two plan values as equal
TIE_TOLERANCE = 1e-9

@dataclass(frozen=True)
class PriceForecast:
  prices: np.ndarray

  def __post_init__(self):
    prices = np.asarray(self.prices, dtype=np.float64).reshape(-1)
    if prices.size == 0:
      raise ValueError("A price forecast needs at least one step.")
    if not np.all(np.isfinite(prices)) or np.any(prices < 0):
      raise ValueError(f"Forecast prices must be finite and >= 0. Got: {prices}")
    object.__setattr__(self, "prices", prices)

  @property
  def horizon(self) -> int:
    return self.prices.size

@dataclass(frozen=True)
class HorizonPlan:
  """
  p_g, p_l: (H,) energy sold and bought at each step
  mode: (H,) 1 where the battery acts as a load, else 0
  soe: (H+1,) state of energy before each step and after the last
  objective: forecast revenue of the schedule
  """
  p_g: np.ndarray
  p_l: np.ndarray
  mode: np.ndarray
  soe: np.ndarray
  objective: float

  @property
  def horizon(self) -> int:
    return self.p_g.size

  @property
  def schedule(self) -> list:
    """[ (p_g, p_l, mode, soe after the step), ... ]"""
    return [
      (float(self.p_g[t]), float(self.p_l[t]), int(self.mode[t]), float(self.soe[t+1]))
      for t in range(self.horizon)
    ]

  @property
  def first_quantity(self) -> float:
    return float(self.p_g[0] - self.p_l[0])

def horizon_revenue(prices:Sequence[float], p_g:Sequence[float], p_l:Sequence[float]) -> float:
  prices = np.asarray(prices, dtype=np.float64)
  net = np.asarray(p_g, dtype=np.float64) - np.asarray(p_l, dtype=np.float64)
  return math.fsum(prices * net)

class _Lattice:
  """
  SOE lattice for a horizon starting at soe0.

  Nodes 0 .. levels-1 are the global grid floor + j * spacing. When
  soe0 is off that grid, nodes levels .. size-1 hold the shifted grid
  soe0 + k * spacing that lies within bounds.

  An action moves the state by a whole number of spacings, limited by
  the rate limits, and is clipped at the floor and the capacity. So the
  shifted grid drains into the global grid through the bounds and never
  the other way around.
  """
  def __init__(self, soe0:float, params:BatteryParams, grid_levels:int):
    if grid_levels < 2:
      raise ValueError(f"grid_levels must be >= 2. Got: {grid_levels}")
    if not (
      math.isfinite(soe0)
      and params.soe_floor - SOE_TOLERANCE <= soe0 <= params.energy_capacity + SOE_TOLERANCE
    ):
      raise InfeasibleStart(
        f"Initial state of energy {soe0} lies outside of "
        f"[{params.soe_floor}, {params.energy_capacity}]."
      )

    self.params = params
    self.levels = grid_levels
    self.spacing = (params.energy_capacity - params.soe_floor) / (grid_levels - 1)

    grid = params.soe_floor + np.arange(grid_levels, dtype=np.float64) * self.spacing
    grid[-1] = params.energy_capacity

    offset = (soe0 - params.soe_floor) / self.spacing
    nearest = min(max(int(round(offset)), 0), grid_levels - 1)
    if abs(grid[nearest] - soe0) <= SOE_TOLERANCE * max(1.0, params.energy_capacity):
      shifted = np.zeros((0,), dtype=np.float64)
      self.start = nearest
    else:
      below = int(math.floor(offset))
      above = int(math.floor((params.energy_capacity - soe0) / self.spacing))
      shifted = soe0 + (np.arange(below + above + 1, dtype=np.float64) - below) * self.spacing
      shifted = np.clip(shifted, params.soe_floor, params.energy_capacity)
      shifted[below] = soe0
      self.start = grid_levels + below

    self.soe = np.concatenate([ grid, shifted ])
    self.size = self.soe.size
    self.shifted_size = shifted.size

    # shifts past the far end of the grid all clip to a bound
    self.max_up = min(
      int(math.floor(params.max_charge * params.eta_charge / self.spacing + SOE_TOLERANCE)),
      grid_levels - 1
    )
    self.max_down = min(
      int(math.floor(params.max_discharge * params.eta_discharge / self.spacing + SOE_TOLERANCE)),
      grid_levels - 1
    )
    self.moves = np.arange(-self.max_down, self.max_up + 1)

  def targets(self, node:int) -> tuple:
    """
    Nodes reached from node by every move and the signed change
    in state of energy (+ charges) of each.

    Returns: (targets, deltas)
    """
    L = self.levels
    if node < L:
      targets = np.clip(node + self.moves, 0, L - 1)
    else:
      shifted = node - L + self.moves
      targets = np.where(
        shifted >= self.shifted_size, L - 1,
        np.where(shifted < 0, 0, L + shifted)
      )
    return targets, self.soe[targets] - self.soe[node]

  def quantities(self, deltas:np.ndarray) -> np.ndarray:
    """Signed bid quantity (+ sells) of a change in state of energy (+ charges)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    return np.where(
      deltas > 0,
      -deltas / self.params.eta_charge,
      -deltas / self.params.eta_discharge,
    )

  def preferred(self, deltas:np.ndarray) -> np.ndarray:
    """Tie-break order: idle, then by |quantity|, sells before buys."""
    qty = self.quantities(deltas)
    return np.lexsort(((deltas > 0), np.abs(qty)))

  def plan(self, prices:np.ndarray, nodes:Sequence[int]) -> HorizonPlan:
    nodes = np.asarray(nodes, dtype=np.int64)
    soe = self.soe[nodes]
    qty = self.quantities(np.diff(soe))
    p_g = np.where(qty > 0, qty, 0.0)
    p_l = np.where(qty < 0, -qty, 0.0)
    return HorizonPlan(
      p_g=p_g,
      p_l=p_l,
      mode=(p_l > 0).astype(np.uint8),
      soe=soe,
      objective=horizon_revenue(prices, p_g, p_l),
    )

def _window_max(values:np.ndarray, offsets:int, upward:bool) -> np.ndarray:
  """
  For each i, max of values[i+1 .. i+offsets] (upward) or
  values[i-offsets .. i-1] (downward), -inf where the window is empty.

  Windows are covered by two overlapping power of two spans, so the
  cost is O(n log offsets).
  """
  n = values.size
  pad = np.full((offsets,), -np.inf)
  if upward:
    padded = np.concatenate([ values[1:], pad ])
  else:
    padded = np.concatenate([ pad, values[:-1] ])

  # table[i] = max(padded[i : i + span])
  table = padded
  span = 1
  while span * 2 <= offsets:
    table = np.maximum(table[:-span], table[span:])
    span *= 2
  return np.maximum(table[:n], table[offsets - span:offsets - span + n])

def _best_shift(
  nxt:np.ndarray, price:float, spacing:float,
  max_up:int, max_down:int, params:BatteryParams
) -> np.ndarray:
  """Best of idling or moving up to max_up / max_down points along an evenly spaced row."""
  best = np.copy(nxt)
  idx = np.arange(nxt.size, dtype=np.float64)
  max_up = min(max_up, nxt.size - 1)
  max_down = min(max_down, nxt.size - 1)
  if max_up > 0:
    buy = price * spacing / params.eta_charge
    charge = _window_max(nxt - buy * idx, max_up, upward=True) + buy * idx
    best = np.maximum(best, charge)
  if max_down > 0:
    sell = price * spacing / params.eta_discharge
    discharge = _window_max(nxt - sell * idx, max_down, upward=False) + sell * idx
    best = np.maximum(best, discharge)
  return best

def solve_horizon(
  soe0:float,
  forecast:PriceForecast,
  params:BatteryParams,
  grid_levels:int = DEFAULT_GRID_LEVELS,
) -> HorizonPlan:
  """
  Revenue maximal schedule over the forecast horizon.

  Ties are broken in favor of idling, then of the smallest
  absolute quantity.

  Returns: HorizonPlan
  """
  if not isinstance(forecast, PriceForecast):
    forecast = PriceForecast(forecast)

  lattice = _Lattice(soe0, params, grid_levels)
  prices = forecast.prices
  H = forecast.horizon
  L = lattice.levels
  shifted = lattice.soe[L:]
  rows = np.arange(lattice.shifted_size)

  # values[t][i]: best revenue from step t onward starting at lattice node i
  values = [ None ] * (H + 1)
  values[H] = np.zeros((lattice.size,), dtype=np.float64)

  for t in reversed(range(H)):
    nxt = values[t+1]
    price = prices[t]
    best_grid = _best_shift(nxt[:L], price, lattice.spacing, lattice.max_up, lattice.max_down, params)
    best_shifted = _best_shift(nxt[L:], price, lattice.spacing, lattice.max_up, lattice.max_down, params)
    if lattice.shifted_size:
      to_capacity = (lattice.shifted_size - rows) <= lattice.max_up
      capacity = nxt[L-1] - price * (params.energy_capacity - shifted) / params.eta_charge
      best_shifted = np.where(to_capacity, np.maximum(best_shifted, capacity), best_shifted)

      to_floor = rows < lattice.max_down
      floor = nxt[0] + price * (shifted - params.soe_floor) / params.eta_discharge
      best_shifted = np.where(to_floor, np.maximum(best_shifted, floor), best_shifted)
    values[t] = np.concatenate([ best_grid, best_shifted ])

  nodes = [ lattice.start ]
  for t in range(H):
    targets, deltas = lattice.targets(nodes[-1])
    candidates = prices[t] * lattice.quantities(deltas) + values[t+1][targets]
    top = candidates.max()
    slack = TIE_TOLERANCE * max(1.0, abs(top))
    order = lattice.preferred(deltas)
    choice = order[np.argmax(candidates[order] >= top - slack)]
    nodes.append(int(targets[choice]))

  return lattice.plan(prices, nodes)

def enumerate_oracle(
  soe0:float,
  forecast:PriceForecast,
  params:BatteryParams,
  grid_levels:int,
) -> HorizonPlan:
  """
  Exhaustively enumerate every admissible action sequence as a path
  through the time expanded lattice graph and return the best one.
  Intended for testing solve_horizon.
  """
  if not isinstance(forecast, PriceForecast):
    forecast = PriceForecast(forecast)

  H = forecast.horizon
  if grid_levels ** H > ORACLE_LIMIT:
    raise OracleTooLarge(
      f"grid_levels^H = {grid_levels}^{H} exceeds the enumeration limit of {ORACLE_LIMIT}."
    )

  lattice = _Lattice(soe0, params, grid_levels)
  prices = forecast.prices

  G = nx.DiGraph()
  for t in range(H):
    for node in range(lattice.size):
      targets, deltas = lattice.targets(node)
      revenues = prices[t] * lattice.quantities(deltas)
      for target, revenue in zip(targets, revenues):
        G.add_edge((t, node), (t+1, int(target)), revenue=float(revenue))
  for node in range(lattice.size):
    G.add_edge((H, node), "end")

  best = None
  best_revenue = -np.inf
  for path in nx.all_simple_paths(G, (0, lattice.start), "end"):
    revenue = math.fsum(
      G.edges[u, v]["revenue"] for u, v in zip(path[:-2], path[1:-1])
    )
    if revenue > best_revenue:
      best, best_revenue = path, revenue

  return lattice.plan(prices, [ node for t, node in best[:-1] ])

def supervisor_action(
  observation:MarketObservation,
  params:BatteryParams,
  forecast:PriceForecast,
  grid_levels:int = DEFAULT_GRID_LEVELS,
) -> AgentAction:
  """
  Bid the forecast price for the first step of the revenue
  maximal plan: { forecast[0], p_g[0] - p_l[0] }.
  """
  if not isinstance(forecast, PriceForecast):
    forecast = PriceForecast(forecast)

  plan = solve_horizon(observation.soe, forecast, params, grid_levels)
  return AgentAction(float(forecast.prices[0]), plan.first_quantity)
