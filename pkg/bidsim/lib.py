import numpy as np

def clamp(val, low, high):
  return min(max(val, low), high)

def percentage(part:float, whole:float) -> float:
  """100 * part / whole clamped to [0,100], 0 when whole is 0."""
  if whole == 0:
    return 0.0
  return clamp(100.0 * part / whole, 0.0, 100.0)

def moving_average(a:np.ndarray, n:int, mode:str = "edge") -> np.ndarray:
  """
  Centered moving average over a window of n samples, padding
  the ends with `mode` (see np.pad) so the output keeps the
  input length.
  """
  if n <= 0:
    raise ValueError(f"Window size ({n}), must be >= 1.")

  a = np.asarray(a, dtype=np.float64)
  if n == 1 or a.size == 0:
    return np.copy(a)

  left = n // 2
  padded = np.pad(a, [left, n - 1 - left], mode=mode)
  ret = np.cumsum(np.concatenate([ [0.0], padded ]))
  return (ret[n:] - ret[:-n]) / float(n)
