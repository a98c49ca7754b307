"""Dense neural networks on the autodiff tape.

Provides multilayer perceptrons with SELU / softplus / leaky-ReLU
activations and per-layer dropout, a sinusoidal feature embedding with
learnable spectral weights, finite-difference input derivatives that stay
on the tape (so parameter gradients flow through them), the Adam
optimizer, and a versioned JSON weight format with bit-exact round trips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import rng

ACTIVATIONS = ("linear", "selu", "softplus", "leaky_relu")

WEIGHT_FORMAT_VERSION = 1


@dataclass
class Layer:
    """One dense layer: weight [out, in], bias [out]."""

    weight: ad.Tensor
    bias: ad.Tensor
    activation: str = "linear"
    activation_param: float = 0.0  # softplus beta or leaky-relu slope
    dropout: float = 0.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")


class Mlp:
    """Dense feed-forward network over tape tensors.

    Evaluation mode is a pure deterministic function of the input; training
    mode applies inverted dropout with masks drawn from the call seed.
    """

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("Mlp needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.weight.value.shape[0] != b.weight.value.shape[1]:
                raise ValueError("layer dimensions do not chain")
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.value.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.value.shape[0]

    def parameters(self) -> list[ad.Tensor]:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x, mode="eval", seed=0):
        """Apply the network to `x` ([n, in] or [in]).

        Raises if the result stops being finite, which signals exploded
        weights rather than a recoverable condition.
        """
        h = ad.constant(x) if not isinstance(x, ad.Tensor) else x
        if h.value.shape[-1] != self.in_dim:
            raise ValueError(
                f"input dim {h.value.shape[-1]} != network dim {self.in_dim}"
            )
        for i, layer in enumerate(self.layers):
            h = ad.add(ad.matmul(h, _transpose(layer.weight)), layer.bias)
            if layer.activation == "selu":
                h = ad.selu(h)
            elif layer.activation == "softplus":
                h = ad.softplus(h, beta=layer.activation_param or 1.0)
            elif layer.activation == "leaky_relu":
                h = ad.leaky_relu(h, slope=layer.activation_param or 0.01)
            if layer.dropout > 0.0 and mode == "train":
                gen = rng.stream(seed, i, 0xD0)
                keep = rng.uniform(gen, h.value.shape) >= layer.dropout
                mask = keep.astype(np.float64) / (1.0 - layer.dropout)
                h = ad.mul(h, ad.Tensor(mask))
        if not np.all(np.isfinite(h.value)):
            raise FloatingPointError("non-finite network output")
        return h

    def __call__(self, x, mode="eval", seed=0):
        return self.forward(x, mode=mode, seed=seed)


def _transpose(t: ad.Tensor) -> ad.Tensor:
    out = t.value.T

    def backward(g):
        t._accumulate(g.T)

    return ad._make(out, (t,), backward)


class FourierFeatureEmbedding:
    """Sinusoidal input features with learnable spectral weights.

    Maps v to [sin(s*Bv), cos(s*Bv), v] where B [m, in] and the scalar
    scale s are trainable; the output width is 2m + in.
    """

    def __init__(self, spectral_weights: np.ndarray, scale: float = 1.0):
        w = np.asarray(spectral_weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("spectral weights must be [m, in]")
        self.spectral_weights = ad.parameter(w)
        self.scale = ad.parameter(np.float64(scale))

    @property
    def in_dim(self) -> int:
        return self.spectral_weights.value.shape[1]

    @property
    def out_dim(self) -> int:
        m = self.spectral_weights.value.shape[0]
        return 2 * m + self.in_dim

    def parameters(self) -> list[ad.Tensor]:
        return [self.spectral_weights, self.scale]

    def apply(self, x):
        x = ad.constant(x) if not isinstance(x, ad.Tensor) else x
        z = ad.mul(ad.matmul(x, _transpose(self.spectral_weights)), self.scale)
        return ad.concat([ad.sin(z), ad.cos(z), x], axis=-1)


def forward(net: Mlp, embedding, x, mode="eval", seed=0):
    """Network forward pass with an optional feature embedding in front."""
    h = ad.constant(x) if not isinstance(x, ad.Tensor) else x
    if embedding is not None:
        h = embedding.apply(h)
    return net.forward(h, mode=mode, seed=seed)


# -- construction ----------------------------------------------------------

def init_mlp(sizes, activations, seed, dropout=0.0, activation_param=0.0,
             final_std=None) -> Mlp:
    """Build an Mlp with fan-in-scaled normal weights.

    `sizes` is [in, h1, ..., out]; `activations` applies to all but the
    final layer (final layer is linear). `final_std`, when given, draws the
    last weight matrix from N(0, final_std^2) with zero bias so the initial
    output is near zero. Dropout attaches to hidden layers only.
    """
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    layers = []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        gen = rng.stream(seed, i, 0x11)
        last = i == n_layers - 1
        if last and final_std is not None:
            w = rng.normal(gen, (fan_out, fan_in)) * final_std
            b = np.zeros(fan_out)
        else:
            w = rng.normal(gen, (fan_out, fan_in)) / np.sqrt(fan_in)
            b = np.zeros(fan_out)
        layers.append(Layer(
            weight=ad.parameter(w),
            bias=ad.parameter(b),
            activation="linear" if last else activations,
            activation_param=activation_param,
            dropout=0.0 if last else dropout,
        ))
    return Mlp(layers)


# -- gradients ---------------------------------------------------------------

def param_grad(loss_fn, params: list[ad.Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradient of a scalar loss w.r.t. `params`.

    `loss_fn` must return a scalar Tensor built from recorded primitives;
    anything else means an unrecorded computation leaked into the graph.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not isinstance(loss, ad.Tensor):
        raise TypeError("loss_fn must return a Tensor built on the tape")
    loss.backward()
    return [np.zeros_like(p.value) if p.grad is None else p.grad.copy()
            for p in params]


def input_derivs(net: Mlp, embedding, X, t, h=1e-3):
    """Finite-difference input derivatives, recorded on the tape.

    For u(X, t) with X [n, d] and scalar/[n] time t, returns

    - du_dt       [n, out]: (u(X, t+h) - u(X, t-h)) / 2h
    - d2u_dt2     [n, out]: (u(X, t+h) - 2 u(X, t) + u(X, t-h)) / h^2
    - jacobian    [n, out, d]: central differences along each coordinate

    Every stencil evaluation is an ordinary forward pass, so gradients of
    any downstream loss w.r.t. network parameters include the dependence
    through these derivative estimates. Time stencil points must stay
    inside [-0.5, 1.5].
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    n, d = X.shape
    t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (n, 1))
    if np.any(t + h > 1.5) or np.any(t - h < -0.5):
        raise ValueError("time stencil leaves the [-0.5, 1.5] guard band")

    def u(Xa, ta):
        inp = ad.constant(np.concatenate([Xa, ta], axis=1))
        return forward(net, embedding, inp, mode="eval")

    u0 = u(X, t)
    up = u(X, t + h)
    um = u(X, t - h)
    inv2h = 1.0 / (2.0 * h)
    du_dt = ad.mul(ad.sub(up, um), inv2h)
    d2u_dt2 = ad.mul(ad.sub(ad.add(up, um), ad.mul(u0, 2.0)), 1.0 / h**2)
    cols = []
    for j in range(d):
        dX = np.zeros_like(X)
        dX[:, j] = h
        cols.append(ad.mul(ad.sub(u(X + dX, t), u(X - dX, t)), inv2h))
    jac = ad.stack_last(cols)
    return du_dt, d2u_dt2, jac


# -- Adam --------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments and hyperparameters (moments start at zero)."""

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            first_moment=[np.zeros_like(np.asarray(p)) for p in params],
            second_moment=[np.zeros_like(np.asarray(p)) for p in params],
            step_count=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update; returns (new_params, state).

    `params` and `grads` are parallel lists of arrays. The state is
    advanced in place and returned for convenience.
    """
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient component")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = state.first_moment[i] = state.beta1 * state.first_moment[i] + (1 - state.beta1) * g
        v = state.second_moment[i] = state.beta2 * state.second_moment[i] + (1 - state.beta2) * g * g
        new_params.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return new_params, state


def adam_step_tensors(tensors: list[ad.Tensor], state: AdamState):
    """In-place Adam update for tape parameters using their .grad fields."""
    grads = [np.zeros_like(p.value) if p.grad is None else p.grad for p in tensors]
    new_values, _ = adam_step([p.value for p in tensors], grads, state)
    for p, v in zip(tensors, new_values):
        p.value = v
    return state


# -- serialization -------------------------------------------------------------

def _fmt(x: float) -> float:
    # round-trip via 17 significant decimal digits (exact for f64)
    return float(f"{x:.17g}")


def _arr_out(a: np.ndarray) -> list:
    return [_fmt(v) for v in np.asarray(a, dtype=np.float64).ravel().tolist()]


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "version": WEIGHT_FORMAT_VERSION,
        "layers": [
            {
                "shape": list(layer.weight.value.shape),
                "activation": layer.activation,
                "activation_param": _fmt(layer.activation_param),
                "dropout": _fmt(layer.dropout),
                "weight": _arr_out(layer.weight.value),
                "bias": _arr_out(layer.bias.value),
            }
            for layer in net.layers
        ],
    }


def mlp_from_dict(doc: dict) -> Mlp:
    if doc.get("version") != WEIGHT_FORMAT_VERSION:
        raise ValueError(f"unsupported weight format version {doc.get('version')}")
    layers = []
    for layer_doc in doc["layers"]:
        out_dim, in_dim = layer_doc["shape"]
        w = np.array(layer_doc["weight"], dtype=np.float64).reshape(out_dim, in_dim)
        b = np.array(layer_doc["bias"], dtype=np.float64)
        layers.append(Layer(
            weight=ad.parameter(w), bias=ad.parameter(b),
            activation=layer_doc["activation"],
            activation_param=float(layer_doc["activation_param"]),
            dropout=float(layer_doc["dropout"]),
        ))
    return Mlp(layers)


def embedding_to_dict(emb: FourierFeatureEmbedding | None) -> dict | None:
    if emb is None:
        return None
    return {
        "version": WEIGHT_FORMAT_VERSION,
        "shape": list(emb.spectral_weights.value.shape),
        "spectral_weights": _arr_out(emb.spectral_weights.value),
        "scale": _fmt(float(emb.scale.value)),
    }


def embedding_from_dict(doc: dict | None) -> FourierFeatureEmbedding | None:
    if doc is None:
        return None
    m, d = doc["shape"]
    w = np.array(doc["spectral_weights"], dtype=np.float64).reshape(m, d)
    return FourierFeatureEmbedding(w, scale=float(doc["scale"]))


def save_mlp(net: Mlp, path):
    with open(path, "w") as f:
        json.dump(mlp_to_dict(net), f)


def load_mlp(path) -> Mlp:
    with open(path) as f:
        return mlp_from_dict(json.load(f))
