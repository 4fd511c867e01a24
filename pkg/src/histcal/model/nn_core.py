"""Dense feed-forward network with hand-written forward and backward passes.

The network is split into an encoder (layers before ``head_start``) and a
histogram head (layers from ``head_start`` on). ``backward`` takes a
``head_grad_scale`` that multiplies the gradients assigned to head parameters
while the gradient flowing back into the encoder stays the plain chain-rule
gradient. A scale of -1 makes the head ascend a term the encoder descends,
which is how the min-max entropy game runs in a single backward pass.

All arithmetic is float64.
"""

import logging
from dataclasses import dataclass, field
from enum import StrEnum, auto
from typing import Optional, Sequence

import numpy as np

from histcal.utils.errors import DimensionError, DomainError, StateError, ConfigError
from histcal.utils.seeds import derive_rng

logger = logging.getLogger("NNCore")


class Activation(StrEnum):
    relu = auto()
    softmax = auto()
    identity = auto()


def as_matrix(X, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D C-contiguous float64 array with finite entries."""
    arr = np.ascontiguousarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class DenseLayer:
    weights: np.ndarray     # fan_in x fan_out
    bias: np.ndarray        # fan_out
    activation: Activation

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2:
            raise DimensionError(f"layer weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape[0] != self.weights.shape[1]:
            raise DimensionError(
                f"bias length {self.bias.shape[0]} does not match fan_out {self.weights.shape[1]}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class Model:
    """Ordered dense layers; ``layers[head_start:]`` form the histogram head."""
    layers: list[DenseLayer]
    head_start: int
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("model needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers[:-1], self.layers[1:])):
            if a.fan_out != b.fan_in:
                raise DimensionError(
                    f"layer {i} fan_out {a.fan_out} does not feed layer {i + 1} fan_in {b.fan_in}")
        if not 0 < self.head_start <= len(self.layers):
            raise DimensionError(
                f"head_start must be in (0, {len(self.layers)}], got {self.head_start}")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def activations(self) -> list[Activation]:
        return [layer.activation for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def encoded_dim(self) -> int:
        return self.layers[self.head_start - 1].fan_out

    @property
    def n_bins(self) -> int:
        last = self.layers[-1]
        if last.activation != Activation.softmax:
            raise StateError("model has no softmax histogram head")
        return last.fan_out

    def parameters(self) -> list[np.ndarray]:
        res = []
        for layer in self.layers:
            res.append(layer.weights)
            res.append(layer.bias)
        return res

    def with_parameters(self, params: Sequence[np.ndarray]) -> "Model":
        if len(params) != 2 * len(self.layers):
            raise DimensionError(f"expected {2 * len(self.layers)} parameter arrays, got {len(params)}")
        layers = []
        for i, layer in enumerate(self.layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
                raise DimensionError(f"parameter shapes for layer {i} do not match the model")
            layers.append(DenseLayer(w, b, layer.activation))
        return Model(layers=layers, head_start=self.head_start, seed=self.seed)

    def copy(self) -> "Model":
        return self.with_parameters([p.copy() for p in self.parameters()])


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]            # input to each layer
    pre_activations: list[np.ndarray]
    output: np.ndarray
    head_start: int

    @property
    def z(self) -> np.ndarray:
        """Encoder output F_theta(X), the input to the first head layer."""
        return self.inputs[self.head_start]

    @property
    def batch_size(self) -> int:
        return self.output.shape[0]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    bias: list[np.ndarray]

    def as_list(self) -> list[np.ndarray]:
        res = []
        for w, b in zip(self.weights, self.bias):
            res.append(w)
            res.append(b)
        return res

    def __add__(self, other: "Gradients") -> "Gradients":
        if len(self.weights) != len(other.weights):
            raise DimensionError("cannot add gradients of different models")
        return Gradients(weights=[a + b for a, b in zip(self.weights, other.weights)],
                         bias=[a + b for a, b in zip(self.bias, other.bias)])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.as_list())

    @classmethod
    def zeros_like(cls, model: Model) -> "Gradients":
        return cls(weights=[np.zeros_like(layer.weights) for layer in model.layers],
                   bias=[np.zeros_like(layer.bias) for layer in model.layers])


def _activate(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.relu:
        return np.maximum(pre, 0.0)
    if activation == Activation.softmax:
        return softmax(pre)
    return pre


def forward(model: Model, X) -> tuple[np.ndarray, ForwardCache]:
    X = as_matrix(X, "X")
    if X.shape[1] != model.input_dim:
        raise DimensionError(f"X has {X.shape[1]} columns, model expects {model.input_dim}")
    inputs = []
    pres = []
    a = X
    for layer in model.layers:
        inputs.append(a)
        pre = a @ layer.weights + layer.bias
        pres.append(pre)
        a = _activate(pre, layer.activation)
    # the input to layer i is kept at inputs[i]; appending the output lets
    # inputs[head_start] address the encoder output even when the head is empty
    inputs.append(a)
    return a, ForwardCache(inputs=inputs, pre_activations=pres, output=a, head_start=model.head_start)


def encode(model: Model, X) -> np.ndarray:
    """Encoder features only, without running the head."""
    a = as_matrix(X, "X")
    if a.shape[1] != model.input_dim:
        raise DimensionError(f"X has {a.shape[1]} columns, model expects {model.input_dim}")
    for layer in model.layers[:model.head_start]:
        a = _activate(a @ layer.weights + layer.bias, layer.activation)
    return a


def predict_proba(model: Model, X, batch_rows: int = 4096) -> np.ndarray:
    """Row-batched inference; rows are independent so the result equals one big forward."""
    X = as_matrix(X, "X")
    out = np.empty((X.shape[0], model.layers[-1].fan_out), dtype=np.float64)
    for start in range(0, X.shape[0], batch_rows):
        out[start:start + batch_rows], _ = forward(model, X[start:start + batch_rows])
    return out


def _check_cache(model: Model, cache: ForwardCache):
    if len(cache.pre_activations) != len(model.layers) or cache.head_start != model.head_start:
        raise StateError("forward cache was not produced by this model")
    for layer, pre in zip(model.layers, cache.pre_activations):
        if pre.shape[1] != layer.fan_out:
            raise StateError("forward cache shapes do not match the model")


def backward(model: Model, cache: ForwardCache, dQ, head_grad_scale: float = 1.0) -> Gradients:
    """Gradients of a scalar loss given dLoss/dQ for the output of the matching forward call.

    Head parameter gradients are multiplied by head_grad_scale. The gradient passed
    from the head into the encoder is not scaled.
    """
    _check_cache(model, cache)
    dQ = np.asarray(dQ, dtype=np.float64)
    if dQ.shape != cache.output.shape:
        raise DimensionError(f"dQ shape {dQ.shape} does not match output shape {cache.output.shape}")
    n = len(model.layers)
    grad_w: list = [None] * n
    grad_b: list = [None] * n
    d_out = dQ
    for i in range(n - 1, -1, -1):
        layer = model.layers[i]
        pre = cache.pre_activations[i]
        if layer.activation == Activation.softmax:
            q = cache.inputs[i + 1]
            d_pre = q * (d_out - np.sum(d_out * q, axis=1, keepdims=True))
        elif layer.activation == Activation.relu:
            d_pre = d_out * (pre > 0.0)
        else:
            d_pre = d_out
        gw = cache.inputs[i].T @ d_pre
        gb = d_pre.sum(axis=0)
        if i >= model.head_start and head_grad_scale != 1.0:
            gw = gw * head_grad_scale
            gb = gb * head_grad_scale
        grad_w[i] = gw
        grad_b[i] = gb
        if i > 0:
            d_out = d_pre @ layer.weights.T
    return Gradients(weights=grad_w, bias=grad_b)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must be in [0, 1)")

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], **kwargs)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError("params, grads and Adam moments must have the same length")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"parameter shape {p.shape} and gradient shape {g.shape} differ")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append(p - step)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(m=new_m, v=new_v, t=t, beta1=b1, beta2=b2,
                          eps=state.eps, learning_rate=state.learning_rate)
    return new_params, new_state


def init_model(layer_sizes: Sequence[int], seed: int, head_layers: int = 1) -> Model:
    """He-uniform ReLU hidden layers, Glorot-uniform softmax output, zero biases.

    layer_sizes runs from the input dimension to the bin count, e.g.
    [27, 512, 256, 256, 256, 256, 200, 200].
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigError(f"layer_sizes needs an input and an output size, got {list(layer_sizes)}")
    n_layers = len(sizes) - 1
    if not 1 <= head_layers <= n_layers - 1 and n_layers > 1:
        raise ConfigError(f"head_layers must leave at least one encoder layer, got {head_layers}")
    rng = derive_rng(seed, "model_init")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == n_layers - 1:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            activation = Activation.softmax
        else:
            limit = np.sqrt(6.0 / fan_in)
            activation = Activation.relu
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append(DenseLayer(w, np.zeros(fan_out), activation))
    head_start = max(n_layers - head_layers, 1) if n_layers > 1 else 1
    logger.debug("initialised model %s head_start=%d seed=%d", sizes, head_start, seed)
    return Model(layers=layers, head_start=head_start, seed=seed)
