from io import BytesIO
import struct

import numpy as np

from ..exceptions import SnapshotDecodeError, SnapshotEncodeError

MAGIC = b'BSNN'

def to_snapshot(net:"Mlp") -> bytes:
  """
  Encode a network and its Adagrad state.

  Format (little endian):
  magic b'BSNN' (4 bytes)
  num widths (Nw) (uint32)
  widths x Nw (uint32)
  leak (float64)
  per layer: weights (out x in float64, C order), biases (out float64)
  per layer: weight accumulators, bias accumulators (same layout)
  """
  dims = [ int(d) for d in net.layer_dims ]
  if len(dims) < 2:
    raise SnapshotEncodeError(f"A network needs at least two widths. Got: {dims}")

  result = BytesIO()
  result.write(MAGIC)
  result.write(struct.pack('<I', len(dims)))
  result.write(struct.pack(f'<{len(dims)}I', *dims))
  result.write(struct.pack('<d', net.leak))

  def writearray(arr, i, text):
    expected = (dims[i+1], dims[i]) if "weight" in text else (dims[i+1],)
    if arr.shape != expected:
      raise SnapshotEncodeError(
        f"Layer {i} {text} has shape {arr.shape}, expected {expected}."
      )
    result.write(np.asarray(arr).astype('<f8', copy=False).tobytes('C'))

  for i, (w, b) in enumerate(zip(net.weights, net.biases)):
    writearray(w, i, "weights")
    writearray(b, i, "biases")
  for i, (w, b) in enumerate(zip(net.weight_accumulators, net.bias_accumulators)):
    writearray(w, i, "weight accumulators")
    writearray(b, i, "bias accumulators")

  return result.getvalue()

def from_snapshot(buf:bytes) -> "Mlp":
  from ..neural import Mlp

  if len(buf) < 8 or bytes(buf[:4]) != MAGIC:
    raise SnapshotDecodeError("Missing snapshot header.")

  (num_dims,) = struct.unpack('<I', buf[4:8])
  header_len = 8 + 4 * num_dims + 8
  if num_dims < 2 or len(buf) < header_len:
    raise SnapshotDecodeError(
      f"Snapshot header declares {num_dims} widths but the buffer has {len(buf)} bytes."
    )

  dims = list(struct.unpack(f'<{num_dims}I', buf[8:8 + 4 * num_dims]))
  (leak,) = struct.unpack('<d', buf[8 + 4 * num_dims:header_len])

  shapes = []
  for i in range(num_dims - 1):
    shapes.append((dims[i+1], dims[i]))
    shapes.append((dims[i+1],))

  count = sum(int(np.prod(shape)) for shape in shapes)
  expected = header_len + 2 * 8 * count
  if len(buf) != expected:
    raise SnapshotDecodeError(
      f"The snapshot was {len(buf)} bytes but widths {dims} require {expected} bytes."
    )

  values = np.frombuffer(buf[header_len:], dtype='<f8').astype(np.float64)

  arrays = []
  start = 0
  for shape in shapes + shapes:
    end = start + int(np.prod(shape))
    arrays.append(values[start:end].reshape(shape).copy())
    start = end

  params, accumulators = arrays[:len(shapes)], arrays[len(shapes):]
  net = Mlp(dims, weights=params[0::2], biases=params[1::2], leak=leak)
  net.weight_accumulators = accumulators[0::2]
  net.bias_accumulators = accumulators[1::2]

  if not all(np.all(np.isfinite(p)) for p in params):
    raise SnapshotDecodeError("Snapshot contains non-finite parameters.")

  return net
