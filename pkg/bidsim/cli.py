"""
bidsim command line.

  bidsim validate --config experiment.json
  bidsim run --config experiment.json --policy sac --seed 1 --out runs/sac
  bidsim compare --config experiment.json --seeds 5 --jobs 4 --out runs/compare

Exit status is 0 on success, 1 when a run fails and 2 for usage or
configuration errors.
"""
from typing import Optional

from concurrent.futures import ProcessPoolExecutor
import json
import logging
import os

import click
import numpy as np
import pandas as pd

from . import formats
from .agent import SupervisedActorCritic
from .config import ExperimentConfig, load_config
from .env import POLICIES, RunMetrics, run_simulation
from .exceptions import BidsimError, ConfigError

logger = logging.getLogger(__name__)

PRICE_BIN = 5.0 # $/MWh
SOE_BIN = 50.0 # MWh
BID_BIN = 25.0 # MWh

def _fail(message:str, code:int):
  click.echo(f"Error: {message}", err=True)
  raise click.exceptions.Exit(code)

def _load(config_path:Optional[str]) -> ExperimentConfig:
  try:
    return load_config(config_path)
  except ConfigError as err:
    _fail(str(err), 2)

def simulate(
  config:ExperimentConfig,
  policy:str,
  seed:int,
  progress:bool = False,
  resume:Optional[str] = None,
) -> tuple:
  """
  Run one simulation described by config.

  Returns: (RunMetrics, SupervisedActorCritic or None)
  """
  settings = config.settings()
  demand = config.demand_series()
  stack = config.stack_agents()

  learner = None
  if policy == "sac":
    scales = settings.scales(stack, demand.steps_per_day)
    if resume:
      learner = SupervisedActorCritic.load(resume, settings.sac, scales, seed=seed)
    else:
      learner = SupervisedActorCritic(settings.sac, scales, seed=seed)

  metrics = run_simulation(
    policy, demand, stack, settings,
    seed=seed, learner=learner, progress=progress,
  )
  return metrics, learner

def _simulate_job(job:tuple) -> RunMetrics:
  config, policy, seed = job
  return simulate(config, policy, seed)[0]

def write_outputs(metrics:RunMetrics, out_dir:str):
  os.makedirs(out_dir, exist_ok=True)

  files = {
    "metrics.json": formats.to_metrics_json(metrics.summary()),
    "trace.csv": formats.to_trace_csv(metrics),
    "series.csv": formats.to_series_csv(metrics),
    "cumulative_revenue.csv": formats.to_cumulative_revenue_csv(metrics),
    "price_distribution.csv": formats.to_distribution_csv(metrics.clearing_price_series, PRICE_BIN),
    "soe_distribution.csv": formats.to_distribution_csv(metrics.soe_series, SOE_BIN),
    "bid_distribution.csv": formats.to_distribution_csv(metrics.bid_series, BID_BIN),
  }
  for name, content in files.items():
    with open(os.path.join(out_dir, name), "wt", encoding="utf8", newline="") as f:
      f.write(content)

def revenue_ratio(sac:RunMetrics, mpc:RunMetrics) -> Optional[float]:
  """SAC revenue per day over MPC revenue per day, None when undefined."""
  if mpc.avg_revenue_per_day == 0:
    return 1.0 if sac.avg_revenue_per_day == 0 else None
  return sac.avg_revenue_per_day / mpc.avg_revenue_per_day

def _row(policy:str, seed:int, metrics:RunMetrics, ramp_end:int) -> dict:
  return {
    "policy": policy,
    "seed": seed,
    "avg_revenue_per_day": metrics.avg_revenue_per_day,
    "pct_bid_capacity_cleared": metrics.pct_bid_capacity_cleared,
    "pct_preshield_violations": metrics.pct_preshield_violations,
    "pct_generator_bids": metrics.pct_generator_bids,
    "revenue_per_day_after_ramp": metrics.revenue_per_day_after(ramp_end),
  }

@click.group()
@click.option("--verbose", "-v", count=True, help="-v for progress messages, -vv for every shield intervention.")
def cli(verbose:int):
  """Battery bidding in a uniform price electricity market."""
  level = logging.WARNING
  if verbose == 1:
    level = logging.INFO
  elif verbose > 1:
    level = logging.DEBUG
  logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)

@cli.command()
@click.option("--config", "config_path", default=None, type=str, help="Experiment JSON document (default: built in defaults).")
def validate(config_path:Optional[str]):
  """Check an experiment document and print the resolved values."""
  config = _load(config_path)
  click.echo(json.dumps(config.model_dump(), indent=2, sort_keys=True))

@cli.command()
@click.option("--config", "config_path", default=None, type=str, help="Experiment JSON document (default: built in defaults).")
@click.option("--policy", type=click.Choice(POLICIES), default="sac", show_default=True)
@click.option("--seed", type=int, default=None, help="Overrides the document's seed.")
@click.option("--out", "out_dir", required=True, type=str, help="Output directory.")
@click.option("--resume", default=None, type=str, help="Directory holding actor.nn and critic.nn to continue from.")
@click.option("--progress/--no-progress", default=False, show_default=True)
def run(config_path, policy, seed, out_dir, resume, progress):
  """Simulate one policy and write its metrics and series."""
  config = _load(config_path)
  seed = config.seed if seed is None else seed

  try:
    metrics, learner = simulate(config, policy, seed, progress=progress, resume=resume)
    write_outputs(metrics, out_dir)
    if learner is not None:
      learner.save(os.path.join(out_dir, "agent"))
  except ConfigError as err:
    _fail(str(err), 2)
  except (BidsimError, OSError) as err:
    _fail(str(err), 1)

  click.echo(formats.to_metrics_json(metrics.summary()), nl=False)

@cli.command()
@click.option("--config", "config_path", default=None, type=str, help="Experiment JSON document (default: built in defaults).")
@click.option("--seed", type=int, default=None, help="First seed (default: the document's seed).")
@click.option("--seeds", type=int, default=1, show_default=True, help="Number of consecutive seeds.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Simulations run in parallel.")
@click.option("--out", "out_dir", required=True, type=str, help="Output directory.")
def compare(config_path, seed, seeds, jobs, out_dir):
  """Run the MPC supervisor alone and the actor-critic on identical markets."""
  if seeds < 1 or jobs < 1:
    _fail(f"--seeds ({seeds}) and --jobs ({jobs}) must be >= 1", 2)

  config = _load(config_path)
  first = config.seed if seed is None else seed
  seed_list = list(range(first, first + seeds))
  jobs_list = [ (config, policy, s) for s in seed_list for policy in POLICIES ]

  try:
    if jobs > 1:
      with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_simulate_job, jobs_list))
    else:
      results = [ _simulate_job(job) for job in jobs_list ]
  except ConfigError as err:
    _fail(str(err), 2)
  except (BidsimError, OSError) as err:
    _fail(str(err), 1)

  schedule = config.sac.schedule
  ramp_end = schedule.hold_steps + schedule.ramp_steps

  rows = []
  ratios = []
  for i, s in enumerate(seed_list):
    runs = dict(zip(POLICIES, results[2*i:2*i+2]))
    subdir = out_dir if seeds == 1 else os.path.join(out_dir, f"seed{s}")
    for policy, metrics in runs.items():
      write_outputs(metrics, os.path.join(subdir, policy))
      rows.append(_row(policy, s, metrics, ramp_end))
    ratios.append(revenue_ratio(runs["sac"], runs["mpc"]))

  defined = [ r for r in ratios if r is not None ]
  median = float(np.median(defined)) if defined else None
  if len(defined) < len(ratios):
    logger.warning(f"{len(ratios) - len(defined)} seeds had zero MPC revenue and no defined ratio.")

  report = {
    "seeds": seed_list,
    "ratios": ratios,
    "median_ratio": median,
    "rows": rows,
  }
  os.makedirs(out_dir, exist_ok=True)
  with open(os.path.join(out_dir, "comparison.csv"), "wt", encoding="utf8", newline="") as f:
    f.write(formats.to_comparison_csv(rows))
  with open(os.path.join(out_dir, "comparison.json"), "wt", encoding="utf8") as f:
    f.write(formats.to_metrics_json(report))

  click.echo(pd.DataFrame(rows).to_string(index=False))
  click.echo(f"median revenue ratio (sac / mpc): {median}")

def main():
  cli(prog_name="bidsim")

if __name__ == "__main__":
  main()
