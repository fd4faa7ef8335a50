"""
Report emission for simulation runs. Everything is written in a
fixed column order with shortest round-trip float formatting so
the same run always produces the same bytes.
"""
from typing import Sequence

import json

import numpy as np
import pandas as pd
import fastremap

TRACE_COLUMNS = [
  "step", "supervisor_weight", "explore_sigma",
  "preshield_price", "preshield_quantity",
  "bid_price", "bid_quantity",
  "intervened", "td_error", "reward",
  "soe", "clearing_price",
]

def to_metrics_json(summary:dict) -> str:
  return json.dumps(summary, indent=2, sort_keys=True) + "\n"

def _csv(df:pd.DataFrame) -> str:
  return df.to_csv(index=False, lineterminator="\n")

def histogram(values:Sequence[float], bin_width:float) -> pd.DataFrame:
  """
  Counts of values rounded down to multiples of bin_width.

  Returns: DataFrame with columns bin_start, count, fraction
  """
  values = np.asarray(values, dtype=np.float64)
  if values.size == 0:
    return pd.DataFrame({ "bin_start": [], "count": [], "fraction": [] })

  bins = np.floor(values / bin_width).astype(np.int64)
  offset = bins.min()
  labels, counts = fastremap.unique(bins - offset, return_counts=True)
  labels = labels.astype(np.int64) + offset

  return pd.DataFrame({
    "bin_start": labels * bin_width,
    "count": counts.astype(np.int64),
    "fraction": counts / values.size,
  })

def to_trace_csv(metrics:"RunMetrics") -> str:
  trace = metrics.trace
  df = pd.DataFrame({ name: trace[name] for name in TRACE_COLUMNS })
  df["intervened"] = df["intervened"].astype(np.int64)
  return _csv(df)

def to_series_csv(metrics:"RunMetrics") -> str:
  """Per step market and battery series: the data behind a bidding timeline plot."""
  trace = metrics.trace
  return _csv(pd.DataFrame({
    "step": trace["step"],
    "clearing_price": metrics.clearing_price_series,
    "bid_price": trace["bid_price"],
    "bid_quantity": metrics.bid_series,
    "cleared_generation": trace["dispatched_generation"],
    "load": trace["load"],
    "soe": metrics.soe_series,
  }))

def to_cumulative_revenue_csv(metrics:"RunMetrics") -> str:
  return _csv(pd.DataFrame({
    "step": np.arange(metrics.cumulative_revenue_series.size),
    "cumulative_revenue": metrics.cumulative_revenue_series,
    "revenue_rate": metrics.revenue_rate(),
  }))

def to_distribution_csv(values:Sequence[float], bin_width:float) -> str:
  return _csv(histogram(values, bin_width))

def to_comparison_csv(rows:list) -> str:
  return _csv(pd.DataFrame(rows))
