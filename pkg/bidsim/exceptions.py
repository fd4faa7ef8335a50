class BidsimError(Exception):
  """Base class for every error raised by bidsim."""
  pass

class InvalidBid(BidsimError):
  """A supply bid has a negative or non-finite price or quantity."""
  pass

class InvalidDemand(BidsimError):
  """Demand must be a finite, non-negative energy."""
  pass

class InsufficientSupply(BidsimError):
  """The bid stack cannot serve the requested demand."""
  pass

class InvalidBatteryParams(BidsimError):
  """Battery parameters violate their physical invariants."""
  pass

class InfeasibleTransition(BidsimError):
  """
  The requested charge or discharge would take the state of energy
  outside of its bounds. Executed actions are shielded, so this
  indicates a shield bug.
  """
  pass

class UnsafeSupervisor(BidsimError):
  """The supervisor action offered as a fallback is itself unsafe."""
  pass

class InfeasibleStart(BidsimError):
  """The initial state of energy lies outside of the battery bounds."""
  pass

class OracleTooLarge(BidsimError):
  """Exhaustive enumeration was requested on too large an instance."""
  pass

class DimensionMismatch(BidsimError):
  """Array shapes do not match the network layer widths."""
  pass

class SnapshotDecodeError(BidsimError):
  """Unable to decode a binary network snapshot."""
  pass

class SnapshotEncodeError(BidsimError):
  """Unable to encode a network into a binary snapshot."""
  pass

class ParseError(BidsimError):
  """A demand CSV row could not be parsed."""
  def __init__(self, message:str, line:int):
    super().__init__(f"line {line}: {message}")
    self.line = line

class NonUniformStep(BidsimError):
  """Demand timestamps are not spaced by one constant step."""
  pass

class ConfigError(BidsimError):
  """An experiment document failed validation."""
  def __init__(self, message:str, path:str = ""):
    if path:
      message = f"{path}: {message}"
    super().__init__(message)
    self.path = path
