__version__ = "0.1.0"

from .market import SupplyBid, ClearingOutcome, clear_market, effective_demand
from .battery import BatteryParams, BatteryState, shield
from .mpc import PriceForecast, solve_horizon, supervisor_action
from .neural import Mlp
from .agent import AgentAction, SacConfig, SupervisedActorCritic
from .env import (
  DemandSeries, RunMetrics, run_simulation,
  synth_demand, load_demand_csv, write_demand_csv,
)
from .util import save, load
