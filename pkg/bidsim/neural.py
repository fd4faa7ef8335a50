"""
Dense feed forward network in numpy.

Hidden layers use a leaky ReLU, the output layer is linear.
Gradients are computed by reverse mode differentiation and
parameters are updated with Adagrad.
"""
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import DimensionMismatch
from . import formats

DEFAULT_LEAK = 0.01
DEFAULT_EPSILON = 1e-8

class MlpGradients(NamedTuple):
  weights: list
  biases: list
  inputs: np.ndarray

  def scale(self, factor:float) -> "MlpGradients":
    return MlpGradients(
      [ factor * w for w in self.weights ],
      [ factor * b for b in self.biases ],
      factor * self.inputs,
    )

class Mlp:
  """
  layer_dims: [ input width, hidden widths..., output width ]
  weights[i]: (layer_dims[i+1], layer_dims[i]) float64
  biases[i]: (layer_dims[i+1],) float64
  leak: slope of the activation for negative inputs

  Adagrad accumulators mirror the parameter shapes.
  """
  def __init__(self,
    layer_dims:Sequence[int],
    weights:Optional[list] = None,
    biases:Optional[list] = None,
    leak:float = DEFAULT_LEAK,
    seed:Optional[int] = None,
  ):
    self.layer_dims = [ int(d) for d in layer_dims ]
    if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
      raise DimensionMismatch(
        f"layer_dims must have at least two positive widths. Got: {self.layer_dims}"
      )

    self.leak = float(leak)

    if weights is None or biases is None:
      weights, biases = self._initialize(seed)

    self.weights = [ np.asarray(w, dtype=np.float64) for w in weights ]
    self.biases = [ np.asarray(b, dtype=np.float64) for b in biases ]
    self._check_shapes(self.weights, self.biases)

    self.weight_accumulators = [ np.zeros_like(w) for w in self.weights ]
    self.bias_accumulators = [ np.zeros_like(b) for b in self.biases ]

  def _initialize(self, seed):
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
      bound = 1.0 / np.sqrt(fan_in)
      weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
      biases.append(rng.uniform(-bound, bound, size=(fan_out,)))
    return weights, biases

  def _check_shapes(self, weights, biases):
    if len(weights) != self.num_layers or len(biases) != self.num_layers:
      raise DimensionMismatch(
        f"Expected {self.num_layers} layers, got {len(weights)} weights and {len(biases)} biases."
      )
    for i, (w, b) in enumerate(zip(weights, biases)):
      shape = (self.layer_dims[i+1], self.layer_dims[i])
      if w.shape != shape or b.shape != shape[:1]:
        raise DimensionMismatch(
          f"Layer {i}: expected weight {shape} and bias {shape[:1]}, got {w.shape} and {b.shape}."
        )

  @classmethod
  def zeros(kls, layer_dims:Sequence[int], leak:float = DEFAULT_LEAK) -> "Mlp":
    dims = list(layer_dims)
    return Mlp(
      dims,
      weights=[ np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:]) ],
      biases=[ np.zeros((o,)) for o in dims[1:] ],
      leak=leak,
    )

  @property
  def num_layers(self) -> int:
    return len(self.layer_dims) - 1

  @property
  def parameter_count(self) -> int:
    return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

  def clone(self) -> "Mlp":
    net = Mlp(
      self.layer_dims,
      weights=[ np.copy(w) for w in self.weights ],
      biases=[ np.copy(b) for b in self.biases ],
      leak=self.leak,
    )
    net.weight_accumulators = [ np.copy(a) for a in self.weight_accumulators ]
    net.bias_accumulators = [ np.copy(a) for a in self.bias_accumulators ]
    return net

  def to_snapshot(self) -> bytes:
    return formats.to_snapshot(self)

  @classmethod
  def from_snapshot(kls, buf:bytes) -> "Mlp":
    return formats.from_snapshot(buf)

  def _activate(self, z):
    return leaky_relu(z, self.leak)

  def _check_input(self, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != self.layer_dims[0]:
      raise DimensionMismatch(
        f"Input of shape {x.shape} does not match input width {self.layer_dims[0]}."
      )
    return x

  def _forward_cache(self, x):
    pre_activations = []
    activations = [ x ]
    a = x
    for i, (w, b) in enumerate(zip(self.weights, self.biases)):
      z = w @ a + b
      pre_activations.append(z)
      if i < self.num_layers - 1:
        a = self._activate(z)
      else:
        a = z
      activations.append(a)
    return pre_activations, activations

  def forward(self, x:np.ndarray) -> np.ndarray:
    x = self._check_input(x)
    _, activations = self._forward_cache(x)
    return activations[-1]

  __call__ = forward

  def backward(self, x:np.ndarray, upstream_grad:np.ndarray) -> MlpGradients:
    """
    Reverse mode pass of forward(x).

    upstream_grad: d(loss)/d(output)

    Returns: MlpGradients with d(loss)/d(parameter) for every
      layer and d(loss)/d(input).
    """
    x = self._check_input(x)
    delta = np.asarray(upstream_grad, dtype=np.float64)
    if delta.shape != (self.layer_dims[-1],):
      raise DimensionMismatch(
        f"Upstream gradient of shape {delta.shape} does not match output width {self.layer_dims[-1]}."
      )

    pre_activations, activations = self._forward_cache(x)

    grad_w = [ None ] * self.num_layers
    grad_b = [ None ] * self.num_layers

    for i in reversed(range(self.num_layers)):
      if i < self.num_layers - 1:
        delta = delta * np.where(pre_activations[i] >= 0, 1.0, self.leak)
      grad_w[i] = np.outer(delta, activations[i])
      grad_b[i] = delta
      delta = self.weights[i].T @ delta

    return MlpGradients(grad_w, grad_b, delta)

  def adagrad_step(
    self, grads:MlpGradients,
    learning_rate:float,
    epsilon:float = DEFAULT_EPSILON,
  ) -> "Mlp":
    """
    In place Adagrad update that moves parameters along +grads.
    Pass negated gradients to descend.

    accumulator += grad^2
    param += learning_rate * grad / sqrt(accumulator + epsilon)
    """
    if learning_rate <= 0:
      raise ValueError(f"learning_rate must be positive. Got: {learning_rate}")
    self._check_shapes(grads.weights, grads.biases)

    params = self.weights + self.biases
    accumulators = self.weight_accumulators + self.bias_accumulators
    for param, acc, grad in zip(params, accumulators, grads.weights + grads.biases):
      acc += grad * grad
      denom = np.sqrt(acc + epsilon)
      # zero gradients with a zero accumulator and epsilon = 0 leave the parameter alone
      step = np.divide(grad, denom, out=np.zeros_like(grad), where=(denom > 0))
      param += learning_rate * step

    return self

def leaky_relu(x:np.ndarray, leak:float = DEFAULT_LEAK) -> np.ndarray:
  return np.where(x >= 0, x, leak * x)
