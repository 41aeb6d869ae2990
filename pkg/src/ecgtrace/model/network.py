"""Layer topology, parameter initialisation and exact forward/backward passes.

Tensors are NCHW. Convolutions are 3x3, stride 1, zero "same" padding; pooling
is 2x2 with stride 2 (odd trailing rows/columns are dropped). Dense weights
are stored ``(in_features, out_features)`` so ``logits = x @ W + b``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kind: str = field(default="conv", init=False)


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default="relu", init=False)


@dataclass(frozen=True)
class MaxPool:
    kind: str = field(default="pool", init=False)


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind: str = field(default="dropout", init=False)


@dataclass(frozen=True)
class Flatten:
    kind: str = field(default="flatten", init=False)


@dataclass(frozen=True)
class Dense:
    out_features: int
    kind: str = field(default="dense", init=False)


@dataclass(frozen=True)
class Softmax:
    kind: str = field(default="softmax", init=False)


_LAYER_TYPES = {"conv": Conv2D, "relu": ReLU, "pool": MaxPool, "dropout": Dropout,
                "flatten": Flatten, "dense": Dense, "softmax": Softmax}


def _layer_to_dict(layer) -> dict:
    d = {"kind": layer.kind}
    if isinstance(layer, Conv2D):
        d["out_channels"] = layer.out_channels
    elif isinstance(layer, Dense):
        d["out_features"] = layer.out_features
    elif isinstance(layer, Dropout):
        d["rate"] = layer.rate
    return d


def _layer_from_dict(d: dict):
    d = dict(d)
    cls = _LAYER_TYPES[d.pop("kind")]
    return cls(**d)


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, int, int]
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self._check()

    def _check(self):
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ShapeMismatch("model must end with a single Softmax layer")
        if sum(isinstance(l, Softmax) for l in self.layers) != 1:
            raise ShapeMismatch("model must contain exactly one Softmax layer")
        shapes = self.output_shapes
        logits = shapes[-1]
        if len(logits) != 1 or logits[0] < 2:
            raise ShapeMismatch(f"softmax input must be a vector of >= 2 classes, got {logits}")

    @property
    def num_classes(self) -> int:
        return self.output_shapes[-1][0]

    @property
    def layer_names(self) -> list[str]:
        seen: dict[str, int] = {}
        names = []
        for layer in self.layers:
            seen[layer.kind] = seen.get(layer.kind, 0) + 1
            names.append(f"{layer.kind}{seen[layer.kind]}")
        return names

    @property
    def output_shapes(self) -> list[tuple[int, ...]]:
        shape: tuple[int, ...] = self.input_shape
        out = []
        for name, layer in zip(self.layer_names, self.layers):
            shape = _out_shape(layer, shape, name)
            out.append(shape)
        return out

    def learnable(self) -> list[tuple[str, object, tuple[int, ...]]]:
        """(name, layer, input shape) for every layer that owns weights."""
        shape: tuple[int, ...] = self.input_shape
        out = []
        for name, layer in zip(self.layer_names, self.layers):
            if isinstance(layer, (Conv2D, Dense)):
                out.append((name, layer, shape))
            shape = _out_shape(layer, shape, name)
        return out

    def last_conv(self) -> str:
        convs = [n for n, l in zip(self.layer_names, self.layers) if isinstance(l, Conv2D)]
        if not convs:
            raise ValueError("model has no convolutional layer")
        return convs[-1]

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [_layer_to_dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> ModelSpec:
        return cls(tuple(d["input_shape"]), tuple(_layer_from_dict(l) for l in d["layers"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _out_shape(layer, shape, name):
    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            raise ShapeMismatch(f"{name}: conv needs a CHW input, got {shape}")
        return (layer.out_channels, shape[1], shape[2])
    if isinstance(layer, MaxPool):
        if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
            raise ShapeMismatch(f"{name}: pool needs a CHW input of at least 2x2, got {shape}")
        return (shape[0], shape[1] // 2, shape[2] // 2)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Dense):
        if len(shape) != 1:
            raise ShapeMismatch(f"{name}: dense needs a flat input, got {shape}")
        return (layer.out_features,)
    if isinstance(layer, Dropout):
        if not 0.0 <= layer.rate < 1.0:
            raise ShapeMismatch(f"{name}: dropout rate must be in [0, 1)")
        return shape
    return shape


def reference_spec(input_shape=(1, 64, 64), num_classes: int = 2, dropout: float = 0.2,
                   channels: int = 16, blocks: int = 3) -> ModelSpec:
    """Conv-ReLU-Pool x ``blocks``, Dropout, Dense-K, Softmax."""
    layers = []
    for _ in range(blocks):
        layers += [Conv2D(channels), ReLU(), MaxPool()]
    layers += [Dropout(dropout), Flatten(), Dense(num_classes), Softmax()]
    return ModelSpec(tuple(input_shape), tuple(layers))


def init_params(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> dict[str, dict[str, np.ndarray]]:
    """He-normal weights (std ``sqrt(2 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, layer, in_shape in spec.learnable():
        if isinstance(layer, Conv2D):
            fan_in = in_shape[0] * 9
            shape = (layer.out_channels, in_shape[0], 3, 3)
            n_out = layer.out_channels
        else:
            fan_in = in_shape[0]
            shape = (fan_in, layer.out_features)
            n_out = layer.out_features
        w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[name] = {"weight": w.astype(dtype), "bias": np.zeros(n_out, dtype=dtype)}
    return params


def cast_params(params, dtype):
    return {n: {k: v.astype(dtype) for k, v in p.items()} for n, p in params.items()}


def zeros_like_params(params):
    return {n: {k: np.zeros_like(v) for k, v in p.items()} for n, p in params.items()}


@dataclass
class ForwardResult:
    logits: np.ndarray
    probabilities: np.ndarray
    # Per layer (name, input, output, aux); inputs are what backward needs.
    cache: list = field(repr=False)

    def activation(self, name: str) -> np.ndarray:
        for n, _, out, _ in self.cache:
            if n == name:
                return out
        raise KeyError(name)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _conv_forward(x, w, b):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # N, C, H, W, 3, 3
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # N, H, W, O
    return out.transpose(0, 3, 1, 2) + b[None, :, None, None], xp


def _conv_backward(dout, xp, w):
    n, c, hp, wp = xp.shape
    h, wd = hp - 2, wp - 2
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # O, C, 3, 3
    db = dout.sum(axis=(0, 2, 3))
    dxp = np.zeros_like(xp)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + wd] += np.tensordot(dout, w[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    xc = x[:, :, : 2 * h2, : 2 * w2]
    blocks = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _pool_backward(dout, arg, in_shape):
    n, c, h, w = in_shape
    h2, w2 = dout.shape[2], dout.shape[3]
    blocks = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(in_shape, dtype=dout.dtype)
    dx[:, :, : 2 * h2, : 2 * w2] = (
        blocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    )
    return dx


def forward(spec: ModelSpec, params, batch, train_mode: bool = False, seed=None) -> ForwardResult:
    """Run the network on an ``(N, C, H, W)`` batch.

    Dropout is only active with ``train_mode``; its masks come from
    ``numpy.random.default_rng(seed)`` so a fixed seed freezes them.
    """
    first = next(iter(params.values()))["weight"] if params else None
    dtype = first.dtype if first is not None else np.float64
    x = np.asarray(batch, dtype=dtype)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != spec.input_shape:
        raise ShapeMismatch(f"batch shape {x.shape[1:]} does not match model input {spec.input_shape}")
    rng = np.random.default_rng(seed) if train_mode else None
    cache = []
    logits = None
    for name, layer in zip(spec.layer_names, spec.layers):
        inp = x
        aux = None
        if isinstance(layer, Conv2D):
            p = params[name]
            x, aux = _conv_forward(x, p["weight"], p["bias"])
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0)
        elif isinstance(layer, MaxPool):
            x, aux = _pool_forward(x)
        elif isinstance(layer, Dropout):
            if train_mode and layer.rate > 0:
                keep = (rng.random(x.shape) >= layer.rate).astype(dtype)
                aux = keep / dtype.type(1.0 - layer.rate)
                x = x * aux
        elif isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            p = params[name]
            x = x @ p["weight"] + p["bias"]
        elif isinstance(layer, Softmax):
            logits = x
            x = softmax(x)
        cache.append((name, inp, x, aux))
    return ForwardResult(logits=logits, probabilities=x, cache=cache)


def backward(spec: ModelSpec, params, cache, grad_logits, return_input_grad: bool = False):
    """Gradients of the loss for every learnable array, given dL/dlogits."""
    grads = zeros_like_params(params)
    g = np.asarray(grad_logits)
    for (name, inp, out, aux), layer in zip(reversed(cache), reversed(spec.layers)):
        if isinstance(layer, Softmax):
            continue  # grad_logits already is the gradient at the softmax input
        if isinstance(layer, Dense):
            w = params[name]["weight"]
            grads[name]["weight"] = inp.T @ g
            grads[name]["bias"] = g.sum(axis=0)
            g = g @ w.T
        elif isinstance(layer, Flatten):
            g = g.reshape(inp.shape)
        elif isinstance(layer, Dropout):
            if aux is not None:
                g = g * aux
        elif isinstance(layer, MaxPool):
            g = _pool_backward(g, aux, inp.shape)
        elif isinstance(layer, ReLU):
            g = g * (inp > 0)
        elif isinstance(layer, Conv2D):
            g, dw, db = _conv_backward(g, aux, params[name]["weight"])
            grads[name]["weight"] = dw
            grads[name]["bias"] = db
    if return_input_grad:
        return grads, g
    return grads
