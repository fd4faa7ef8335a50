from typing import Optional, Union, IO

import io
import re

import numpy as np
import pandas as pd

from ..exceptions import ParseError, NonUniformStep

HEADER = [ "timestamp", "demand_mwh" ]
ONE_DAY = pd.Timedelta(days=1)

def _parser_line(err:Exception) -> int:
  match = re.search(r'line (\d+)', str(err))
  return int(match.group(1)) if match else 0

def _decode(filelike:Union[str, IO]) -> str:
  from ..util import _read

  raw = _read(filelike)
  if isinstance(raw, str):
    return raw

  try:
    text = raw.decode("utf8")
  except UnicodeDecodeError as err:
    line = raw.count(b"\n", 0, err.start) + 1
    raise ParseError(
      f"invalid UTF-8 byte 0x{raw[err.start]:02x} at offset {err.start}", line=line
    )
  return text.removeprefix("\ufeff")

def from_demand_csv(
  filelike:Union[str, IO],
  steps_per_day:Optional[int] = None,
) -> "DemandSeries":
  """
  Parse a demand export.

  Format (UTF-8):
  timestamp,demand_mwh
  2018-06-01T00:00:00,5432.1
  ...

  Timestamps are ISO-8601, strictly increasing and evenly spaced;
  the spacing must divide one day. Line numbers in errors count
  the header as line 1.

  steps_per_day: used only when a single row leaves the step unknown.
  """
  from ..env import DemandSeries

  try:
    df = pd.read_csv(
      io.StringIO(_decode(filelike)), dtype=str,
      keep_default_na=False, skipinitialspace=True,
    )
  except pd.errors.EmptyDataError:
    raise ParseError("file is empty, expected header 'timestamp,demand_mwh'", line=1)
  except pd.errors.ParserError as err:
    raise ParseError(str(err), line=_parser_line(err))

  if [ c.strip() for c in df.columns ] != HEADER:
    raise ParseError(
      f"expected header {','.join(HEADER)}, got {','.join(df.columns)}", line=1
    )
  df.columns = HEADER

  if len(df) == 0:
    raise ParseError("no data rows", line=2)

  timestamps = pd.to_datetime(df["timestamp"], errors="coerce", format="ISO8601")
  demand = pd.to_numeric(df["demand_mwh"], errors="coerce").to_numpy(dtype=np.float64)

  for i in range(len(df)):
    line = i + 2
    if pd.isna(timestamps.iloc[i]):
      raise ParseError(f"invalid timestamp {df['timestamp'].iloc[i]!r}", line=line)
    if not np.isfinite(demand[i]):
      raise ParseError(f"invalid demand {df['demand_mwh'].iloc[i]!r}", line=line)
    if demand[i] < 0:
      raise ParseError(f"demand must be >= 0, got {demand[i]}", line=line)

  timestamps = pd.DatetimeIndex(timestamps)

  if len(timestamps) >= 2:
    deltas = timestamps[1:] - timestamps[:-1]
    for i, delta in enumerate(deltas):
      if delta <= pd.Timedelta(0):
        raise ParseError(
          f"timestamp {timestamps[i+1]} does not increase on {timestamps[i]}", line=i + 3
        )
    step = deltas[0]
    irregular = np.flatnonzero(deltas != step)
    if irregular.size:
      i = int(irregular[0])
      raise NonUniformStep(
        f"Step between lines {i + 2} and {i + 3} is {deltas[i]}, expected {step}."
      )
    if ONE_DAY % step != pd.Timedelta(0):
      raise NonUniformStep(f"Step {step} does not divide one day.")
    steps_per_day = int(ONE_DAY // step)
  elif steps_per_day is None:
    steps_per_day = 48

  return DemandSeries(timestamps=timestamps, demand=demand, steps_per_day=steps_per_day)

def to_demand_csv(series:"DemandSeries") -> str:
  df = pd.DataFrame({
    "timestamp": pd.DatetimeIndex(series.timestamps).strftime("%Y-%m-%dT%H:%M:%S"),
    "demand_mwh": np.asarray(series.demand, dtype=np.float64),
  })
  return df.to_csv(index=False, lineterminator="\n")
