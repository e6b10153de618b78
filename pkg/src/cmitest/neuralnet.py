"""Minimal multilayer-perceptron engine shared by the generator and regressor.

Plain numpy: seeded Glorot-uniform initialization, forward pass, exact
reverse-mode gradients, and bias-corrected Adam updates. Hidden layers use
one activation (relu or tanh); the output layer is always linear. No
dropout or normalization layers, so analytic gradients are exactly
checkable against finite differences.

Serialization is a versioned JSON text record (``format: "mlp"``,
``version: 1``) holding layer dims, the activation name, and each parameter
array as little-endian float64 bytes hex-encoded in row-major order;
round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

RELU = "relu"
TANH = "tanh"
ACTIVATIONS = (RELU, TANH)

_FORMAT_NAME = "mlp"
_FORMAT_VERSION = 1


class NumericalError(RuntimeError):
    """Raised when training or updates produce non-finite numbers."""


@dataclass
class MlpParams:
    """Fully-connected network parameters.

    weights[l] has shape (layer_dims[l+1], layer_dims[l]); biases[l] has
    shape (layer_dims[l+1],). Hidden layers apply `activation`; the final
    layer is linear.
    """

    layer_dims: tuple[int, ...]
    activation: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class MlpGrads:
    """Parameter gradients, shaped exactly like the corresponding MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    """Adam moment accumulators plus hyperparameters; step starts at 0."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = field(default=0)


def mlp_init(layer_dims, activation: str, seed: int) -> MlpParams:
    """Seeded Glorot-uniform weights (scale sqrt(6/(fan_in+fan_out))), zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer dims must be positive, got {dims}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(layer_dims=dims, activation=activation, weights=weights, biases=biases)


def _check_inputs(params: MlpParams, inputs) -> np.ndarray:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise ValueError(f"input width {x.shape[1]} != first layer dim {params.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network inputs")
    return x


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    pre = []
    act = [x]
    h = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pre.append(z)
        if l < last:
            h = np.maximum(z, 0.0) if params.activation == RELU else np.tanh(z)
        else:
            h = z
        act.append(h)
    return h, pre, act


def mlp_forward(params: MlpParams, inputs) -> np.ndarray:
    """Batched forward pass; rows are independent."""
    x = _check_inputs(params, inputs)
    out, _, _ = _forward_cached(params, x)
    return out


def mlp_gradient(params: MlpParams, inputs, upstream) -> MlpGrads:
    """Exact gradients of sum(output * upstream) w.r.t. every parameter."""
    x = _check_inputs(params, inputs)
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    _, pre, act = _forward_cached(params, x)
    if g.shape != (x.shape[0], params.output_dim):
        raise ValueError(f"upstream shape {g.shape} != output shape {(x.shape[0], params.output_dim)}")
    gw = [np.empty(0)] * params.n_layers
    gb = [np.empty(0)] * params.n_layers
    delta = g
    for l in range(params.n_layers - 1, -1, -1):
        gw[l] = delta.T @ act[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ params.weights[l]
            if params.activation == RELU:
                delta = delta * (pre[l - 1] > 0.0)
            else:
                delta = delta * (1.0 - np.tanh(pre[l - 1]) ** 2)
    return MlpGrads(weights=gw, biases=gb)


def adam_init(params: MlpParams, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    if not (0 < beta1 < 1 and 0 < beta2 < 1 and eps > 0):
        raise ValueError("need 0 < beta1, beta2 < 1 and eps > 0")
    zeros = lambda arrs: [np.zeros_like(a) for a in arrs]
    return AdamState(
        m_weights=zeros(params.weights), v_weights=zeros(params.weights),
        m_biases=zeros(params.biases), v_biases=zeros(params.biases),
        learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(params: MlpParams, grads: MlpGrads, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, in place; returns (params, state)."""
    for g in grads.weights + grads.biases:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradients; training aborted")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params.weights + params.biases,
                          grads.weights + grads.biases,
                          state.m_weights + state.m_biases,
                          state.v_weights + state.v_biases):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(p)):
            raise NumericalError("non-finite parameters after update")
    return params, state


def save_mlp(params: MlpParams) -> str:
    """Serialize to the versioned JSON text record (bit-exact round-trip)."""
    return json.dumps(
        {
            "format": _FORMAT_NAME,
            "version": _FORMAT_VERSION,
            "layer_dims": list(params.layer_dims),
            "activation": params.activation,
            "weights": [w.astype("<f8").tobytes().hex() for w in params.weights],
            "biases": [b.astype("<f8").tobytes().hex() for b in params.biases],
        },
        sort_keys=True,
    )


def load_mlp(text: str) -> MlpParams:
    rec = json.loads(text)
    if rec.get("format") != _FORMAT_NAME or rec.get("version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported model record: format={rec.get('format')!r} version={rec.get('version')!r}")
    dims = tuple(int(d) for d in rec["layer_dims"])
    weights = [
        np.frombuffer(bytes.fromhex(h), dtype="<f8").astype(np.float64).reshape(fan_out, fan_in)
        for h, fan_in, fan_out in zip(rec["weights"], dims[:-1], dims[1:])
    ]
    biases = [
        np.frombuffer(bytes.fromhex(h), dtype="<f8").astype(np.float64).copy()
        for h in rec["biases"]
    ]
    return MlpParams(layer_dims=dims, activation=rec["activation"], weights=weights, biases=biases)
