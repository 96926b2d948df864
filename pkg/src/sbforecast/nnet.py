"""From-scratch neural-network engine for next-step time-series regression.

Implements dense, 1-d convolution, max pooling, vanilla/LSTM/GRU recurrent
cells and their bidirectional variants with manual reverse-mode gradients
(including backpropagation through time), Xavier initialization, Adam, and
a factory for the fourteen benchmark architectures.  Everything is float64
numpy; sequences are batch-first arrays of shape (batch, time, channels).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .datapipe import Dataset

__all__ = [
    "LayerSpec",
    "NetSpec",
    "NetModel",
    "TrainOpts",
    "ARCHITECTURES",
    "dense",
    "conv1d",
    "maxpool1d",
    "recurrent",
    "flatten",
    "count_parameters",
    "build_model",
    "build_custom_model",
    "predict",
    "train",
    "gradient_check",
    "save_net_model",
    "load_net_model",
    "save_loss_history",
]

_ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid")
_RECURRENT_KINDS = ("rnn", "lstm", "gru")
_BIDIRECTIONAL_KINDS = tuple(f"bidirectional_{k}" for k in _RECURRENT_KINDS)
_LAYER_KINDS = ("dense", "conv1d", "maxpool1d", "flatten") + _RECURRENT_KINDS + _BIDIRECTIONAL_KINDS


# ---------------------------------------------------------------------------
# Specs


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network: kind plus the size fields that kind uses."""

    kind: str
    units: int | None = None  # dense width or recurrent hidden length
    n_kernels: int | None = None
    kernel_size: int | None = None
    stride: int = 1
    padding: int = 0
    pool_size: int | None = None
    pool_stride: int | None = None
    activation: str = "linear"
    return_sequences: bool = True

    def __post_init__(self):
        if self.kind not in _LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "dense" and (self.units is None or self.units < 1):
            raise ValueError("dense layer requires units >= 1")
        if self.kind == "conv1d":
            if self.n_kernels is None or self.n_kernels < 1:
                raise ValueError("conv1d requires n_kernels >= 1")
            if self.kernel_size is None or self.kernel_size < 1:
                raise ValueError("conv1d requires kernel_size >= 1")
            if self.stride < 1 or self.padding < 0:
                raise ValueError("conv1d requires stride >= 1 and padding >= 0")
        if self.kind == "maxpool1d":
            if self.pool_size is None or self.pool_size < 1:
                raise ValueError("maxpool1d requires pool_size >= 1")
            if self.pool_stride is None:
                object.__setattr__(self, "pool_stride", self.pool_size)
        if self.kind in _RECURRENT_KINDS + _BIDIRECTIONAL_KINDS:
            if self.units is None or self.units < 1:
                raise ValueError(f"{self.kind} layer requires units >= 1")


@dataclass(frozen=True)
class NetSpec:
    """Named, shape-checked stack of layers over fixed-length windows."""

    name: str
    layers: tuple
    input_length: int
    input_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_length < 1 or self.input_channels < 1:
            raise ValueError("input_length and input_channels must be >= 1")
        last = self.layers[-1]
        if last.kind != "dense" or last.units != 1 or last.activation != "linear":
            raise ValueError("final layer must be dense(1, linear)")
        _chain_shapes(self)  # raises on incompatible chains


# Convenience constructors keep architecture tables terse.
def dense(units: int, activation: str = "linear") -> LayerSpec:
    return LayerSpec(kind="dense", units=units, activation=activation)


def conv1d(n_kernels: int, kernel_size: int, stride: int = 1, padding: int = 0,
           activation: str = "relu") -> LayerSpec:
    return LayerSpec(kind="conv1d", n_kernels=n_kernels, kernel_size=kernel_size,
                     stride=stride, padding=padding, activation=activation)


def maxpool1d(pool_size: int, pool_stride: int | None = None) -> LayerSpec:
    return LayerSpec(kind="maxpool1d", pool_size=pool_size, pool_stride=pool_stride)


def recurrent(kind: str, units: int, bidirectional: bool = False) -> LayerSpec:
    name = f"bidirectional_{kind}" if bidirectional else kind
    return LayerSpec(kind=name, units=units, activation="tanh")


def flatten() -> LayerSpec:
    return LayerSpec(kind="flatten")


def _conv_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    out = (length - kernel + 2 * padding) // stride + 1
    if out < 1:
        raise ValueError(
            f"conv/pool output length {out} < 1 (length={length}, kernel={kernel}, "
            f"stride={stride}, padding={padding})"
        )
    return out


def _chain_shapes(spec: NetSpec):
    """Propagate ('seq', length, channels) / ('vec', n) shapes through the stack."""
    first = spec.layers[0]
    if first.kind == "dense":
        shape = ("vec", spec.input_length * spec.input_channels)
    else:
        shape = ("seq", spec.input_length, spec.input_channels)
    shapes = [shape]
    for layer in spec.layers:
        k = layer.kind
        if k == "dense":
            if shape[0] != "vec":
                raise ValueError("dense layer requires a flattened input")
            shape = ("vec", layer.units)
        elif k == "flatten":
            if shape[0] != "seq":
                raise ValueError("flatten requires a sequence input")
            shape = ("vec", shape[1] * shape[2])
        elif k == "conv1d":
            if shape[0] != "seq":
                raise ValueError("conv1d requires a sequence input")
            out_len = _conv_output_length(shape[1], layer.kernel_size, layer.stride, layer.padding)
            shape = ("seq", out_len, layer.n_kernels)
        elif k == "maxpool1d":
            if shape[0] != "seq":
                raise ValueError("maxpool1d requires a sequence input")
            if layer.pool_size > shape[1]:
                raise ValueError(f"pool size {layer.pool_size} exceeds length {shape[1]}")
            out_len = (shape[1] - layer.pool_size) // layer.pool_stride + 1
            shape = ("seq", out_len, shape[2])
        elif k in _RECURRENT_KINDS:
            if shape[0] != "seq":
                raise ValueError(f"{k} requires a sequence input")
            shape = ("seq", shape[1], layer.units)
        elif k in _BIDIRECTIONAL_KINDS:
            if shape[0] != "seq":
                raise ValueError(f"{k} requires a sequence input")
            shape = ("seq", shape[1], 2 * layer.units)
        shapes.append(shape)
    return shapes


def count_parameters(spec: NetSpec) -> int:
    """Exact trainable-parameter total implied by the layer shapes.

    Closed forms per cell: vanilla k(k+m+1), LSTM 4k(k+m+1) with one bias set
    per gate, GRU 3k(k+m+2) with two bias sets per gate; bidirectional layers
    double their unidirectional counterpart.
    """
    shapes = _chain_shapes(spec)
    total = 0
    for layer, shape_in in zip(spec.layers, shapes[:-1]):
        k = layer.kind
        if k == "dense":
            total += shape_in[1] * layer.units + layer.units
        elif k == "conv1d":
            total += layer.n_kernels * (layer.kernel_size * shape_in[2] + 1)
        elif k in _RECURRENT_KINDS + _BIDIRECTIONAL_KINDS:
            m, u = shape_in[2], layer.units
            cell = k.removeprefix("bidirectional_")
            if cell == "rnn":
                per_dir = u * (u + m + 1)
            elif cell == "lstm":
                per_dir = 4 * u * (u + m + 1)
            else:  # gru
                per_dir = 3 * u * (u + m + 2)
            total += 2 * per_dir if k.startswith("bidirectional") else per_dir
    return total


# ---------------------------------------------------------------------------
# Activations


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d(activation)/d(pre-activation), from pre-activation z and output a."""
    if name == "linear":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(float)
    if name == "tanh":
        return 1.0 - a**2
    if name == "sigmoid":
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {name!r}")


def _xavier(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# ---------------------------------------------------------------------------
# Layer implementations (forward caches what backward needs)


class _DenseLayer:
    def __init__(self, spec: LayerSpec, n_in: int, rng):
        self.spec = spec
        w = _xavier(rng, (n_in, spec.units), n_in, spec.units)
        b = np.zeros(spec.units)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def forward(self, x):
        self._x = x
        self._z = x @ self.params[0] + self.params[1]
        self._a = _activate(self.spec.activation, self._z)
        return self._a

    def backward(self, grad):
        dz = grad * _activation_grad(self.spec.activation, self._z, self._a)
        self.grads[0][...] = self._x.T @ dz
        self.grads[1][...] = dz.sum(axis=0)
        return dz @ self.params[0].T


class _Conv1dLayer:
    def __init__(self, spec: LayerSpec, in_channels: int, rng):
        self.spec = spec
        k, kk, cin = spec.n_kernels, spec.kernel_size, in_channels
        w = _xavier(rng, (kk * cin, k), kk * cin, kk * k)
        b = np.zeros(k)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def forward(self, x):
        s, p, kk = self.spec.stride, self.spec.padding, self.spec.kernel_size
        if p:
            x = np.pad(x, ((0, 0), (p, p), (0, 0)))
        bsz, length, cin = x.shape
        m = (length - kk) // s + 1
        idx = np.arange(m)[:, None] * s + np.arange(kk)[None, :]
        patches = x[:, idx, :].reshape(bsz, m, kk * cin)
        self._x_padded_shape = x.shape
        self._patches = patches
        self._z = patches @ self.params[0] + self.params[1]
        self._a = _activate(self.spec.activation, self._z)
        return self._a

    def backward(self, grad):
        s, p, kk = self.spec.stride, self.spec.padding, self.spec.kernel_size
        dz = grad * _activation_grad(self.spec.activation, self._z, self._a)
        bsz, m, _ = dz.shape
        self.grads[0][...] = np.einsum("bmf,bmk->fk", self._patches, dz)
        self.grads[1][...] = dz.sum(axis=(0, 1))
        dpatches = (dz @ self.params[0].T).reshape(bsz, m, kk, -1)
        dx = np.zeros(self._x_padded_shape)
        for j in range(kk):
            dx[:, j : j + s * m : s, :] += dpatches[:, :, j, :]
        if p:
            dx = dx[:, p:-p, :]
        return dx


class _MaxPool1dLayer:
    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params = []
        self.grads = []

    def forward(self, x):
        kp, sp = self.spec.pool_size, self.spec.pool_stride
        bsz, length, c = x.shape
        m = (length - kp) // sp + 1
        idx = np.arange(m)[:, None] * sp + np.arange(kp)[None, :]
        windows = x[:, idx, :]  # (B, M, kp, C)
        self._arg = windows.argmax(axis=2)
        self._in_shape = x.shape
        return windows.max(axis=2)

    def backward(self, grad):
        kp, sp = self.spec.pool_size, self.spec.pool_stride
        bsz, m, c = grad.shape
        dx = np.zeros(self._in_shape)
        for j in range(kp):
            contrib = np.where(self._arg == j, grad, 0.0)
            dx[:, j : j + sp * m : sp, :] += contrib
        return dx


class _FlattenLayer:
    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params = []
        self.grads = []

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._in_shape)


class _RnnCell:
    """Vanilla recurrent pass h_t = tanh(b + W_h h_{t-1} + W_x x_t)."""

    def __init__(self, units: int, n_in: int, rng):
        self.units = units
        wx = _xavier(rng, (n_in, units), n_in, units)
        wh = _xavier(rng, (units, units), units, units)
        b = np.zeros(units)
        self.params = [wx, wh, b]
        self.grads = [np.zeros_like(p) for p in self.params]

    def forward(self, x):
        wx, wh, b = self.params
        bsz, t, _ = x.shape
        hs = np.zeros((bsz, t + 1, self.units))
        for i in range(t):
            hs[:, i + 1] = np.tanh(x[:, i] @ wx + hs[:, i] @ wh + b)
        self._x, self._hs = x, hs
        return hs[:, 1:]

    def backward(self, grad):
        wx, wh, _ = self.params
        x, hs = self._x, self._hs
        bsz, t, _ = x.shape
        for g in self.grads:
            g[...] = 0.0
        dx = np.empty_like(x)
        dh_next = np.zeros((bsz, self.units))
        for i in reversed(range(t)):
            dh = grad[:, i] + dh_next
            dpre = dh * (1.0 - hs[:, i + 1] ** 2)
            self.grads[0] += x[:, i].T @ dpre
            self.grads[1] += hs[:, i].T @ dpre
            self.grads[2] += dpre.sum(axis=0)
            dx[:, i] = dpre @ wx.T
            dh_next = dpre @ wh.T
        return dx


class _LstmCell:
    """LSTM pass with one bias set; gate order [F, I, G, O] along 4k axes."""

    def __init__(self, units: int, n_in: int, rng):
        self.units = units
        wx = _xavier(rng, (n_in, 4 * units), n_in, units)
        wh = _xavier(rng, (units, 4 * units), units, units)
        b = np.zeros(4 * units)
        self.params = [wx, wh, b]
        self.grads = [np.zeros_like(p) for p in self.params]

    def forward(self, x):
        wx, wh, b = self.params
        u = self.units
        bsz, t, _ = x.shape
        hs = np.zeros((bsz, t + 1, u))
        cs = np.zeros((bsz, t + 1, u))
        gates = np.empty((bsz, t, 4 * u))
        for i in range(t):
            pre = x[:, i] @ wx + hs[:, i] @ wh + b
            f = _sigmoid(pre[:, :u])
            ig = _sigmoid(pre[:, u : 2 * u])
            g = np.tanh(pre[:, 2 * u : 3 * u])
            o = _sigmoid(pre[:, 3 * u :])
            cs[:, i + 1] = f * cs[:, i] + ig * g
            hs[:, i + 1] = o * np.tanh(cs[:, i + 1])
            gates[:, i] = np.concatenate([f, ig, g, o], axis=1)
        self._x, self._hs, self._cs, self._gates = x, hs, cs, gates
        return hs[:, 1:]

    def backward(self, grad):
        wx, wh, _ = self.params
        u = self.units
        x, hs, cs, gates = self._x, self._hs, self._cs, self._gates
        bsz, t, _ = x.shape
        for g in self.grads:
            g[...] = 0.0
        dx = np.empty_like(x)
        dh_next = np.zeros((bsz, u))
        dc_next = np.zeros((bsz, u))
        for i in reversed(range(t)):
            f, ig, g, o = (gates[:, i, j * u : (j + 1) * u] for j in range(4))
            c_new = cs[:, i + 1]
            tanh_c = np.tanh(c_new)
            dh = grad[:, i] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c**2) + dc_next
            df = dc * cs[:, i]
            di = dc * g
            dg = dc * ig
            dc_next = dc * f
            dpre = np.concatenate(
                [
                    df * f * (1.0 - f),
                    di * ig * (1.0 - ig),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            self.grads[0] += x[:, i].T @ dpre
            self.grads[1] += hs[:, i].T @ dpre
            self.grads[2] += dpre.sum(axis=0)
            dx[:, i] = dpre @ wx.T
            dh_next = dpre @ wh.T
        return dx


class _GruCell:
    """GRU pass with two bias sets per gate; gate order [Z, R, G] along 3k axes.

    The reset gate multiplies the previous hidden state before the candidate
    projection: G = tanh(b_x^G + b_h^G + W_h^G (R * h) + W_x^G x).
    """

    def __init__(self, units: int, n_in: int, rng):
        self.units = units
        wx = _xavier(rng, (n_in, 3 * units), n_in, units)
        wh = _xavier(rng, (units, 3 * units), units, units)
        bx = np.zeros(3 * units)
        bh = np.zeros(3 * units)
        self.params = [wx, wh, bx, bh]
        self.grads = [np.zeros_like(p) for p in self.params]

    def forward(self, x):
        wx, wh, bx, bh = self.params
        u = self.units
        bsz, t, _ = x.shape
        hs = np.zeros((bsz, t + 1, u))
        gates = np.empty((bsz, t, 3 * u))
        for i in range(t):
            px = x[:, i] @ wx + bx + bh
            z = _sigmoid(px[:, :u] + hs[:, i] @ wh[:, :u])
            r = _sigmoid(px[:, u : 2 * u] + hs[:, i] @ wh[:, u : 2 * u])
            g = np.tanh(px[:, 2 * u :] + (r * hs[:, i]) @ wh[:, 2 * u :])
            hs[:, i + 1] = (1.0 - z) * hs[:, i] + z * g
            gates[:, i] = np.concatenate([z, r, g], axis=1)
        self._x, self._hs, self._gates = x, hs, gates
        return hs[:, 1:]

    def backward(self, grad):
        wx, wh, _, _ = self.params
        u = self.units
        x, hs, gates = self._x, self._hs, self._gates
        bsz, t, _ = x.shape
        for g_ in self.grads:
            g_[...] = 0.0
        dx = np.empty_like(x)
        dh_next = np.zeros((bsz, u))
        for i in reversed(range(t)):
            z, r, g = (gates[:, i, j * u : (j + 1) * u] for j in range(3))
            h_prev = hs[:, i]
            dh = grad[:, i] + dh_next
            dz = dh * (g - h_prev)
            dg = dh * z
            dh_prev = dh * (1.0 - z)
            dg_pre = dg * (1.0 - g**2)
            drh = dg_pre @ wh[:, 2 * u :].T  # gradient wrt (r * h_prev)
            dr = drh * h_prev
            dh_prev = dh_prev + drh * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dpre = np.concatenate([dz_pre, dr_pre, dg_pre], axis=1)
            self.grads[0] += x[:, i].T @ dpre
            self.grads[1][:, :u] += h_prev.T @ dz_pre
            self.grads[1][:, u : 2 * u] += h_prev.T @ dr_pre
            self.grads[1][:, 2 * u :] += (r * h_prev).T @ dg_pre
            dsum = dpre.sum(axis=0)
            self.grads[2] += dsum
            self.grads[3] += dsum
            dx[:, i] = dpre @ wx.T
            dh_prev = dh_prev + dz_pre @ wh[:, :u].T + dr_pre @ wh[:, u : 2 * u].T
            dh_next = dh_prev
        return dx


_CELL_TYPES = {"rnn": _RnnCell, "lstm": _LstmCell, "gru": _GruCell}


class _RecurrentLayer:
    def __init__(self, spec: LayerSpec, n_in: int, rng):
        self.spec = spec
        self.cell = _CELL_TYPES[spec.kind](spec.units, n_in, rng)
        self.params = self.cell.params
        self.grads = self.cell.grads

    def forward(self, x):
        return self.cell.forward(x)

    def backward(self, grad):
        return self.cell.backward(grad)


class _BidirectionalLayer:
    """Forward and reversed-time cells of the same kind, states concatenated."""

    def __init__(self, spec: LayerSpec, n_in: int, rng):
        self.spec = spec
        cell_kind = spec.kind.removeprefix("bidirectional_")
        self.fwd = _CELL_TYPES[cell_kind](spec.units, n_in, rng)
        self.bwd = _CELL_TYPES[cell_kind](spec.units, n_in, rng)
        self.params = self.fwd.params + self.bwd.params
        self.grads = self.fwd.grads + self.bwd.grads

    def forward(self, x):
        hf = self.fwd.forward(x)
        hb = self.bwd.forward(x[:, ::-1])[:, ::-1]
        return np.concatenate([hf, hb], axis=2)

    def backward(self, grad):
        u = self.spec.units
        dxf = self.fwd.backward(grad[:, :, :u])
        dxb = self.bwd.backward(grad[:, ::-1, u:])[:, ::-1]
        return dxf + dxb


def _build_layer(spec: LayerSpec, shape_in, rng):
    if spec.kind == "dense":
        return _DenseLayer(spec, shape_in[1], rng)
    if spec.kind == "conv1d":
        return _Conv1dLayer(spec, shape_in[2], rng)
    if spec.kind == "maxpool1d":
        return _MaxPool1dLayer(spec)
    if spec.kind == "flatten":
        return _FlattenLayer(spec)
    if spec.kind in _RECURRENT_KINDS:
        return _RecurrentLayer(spec, shape_in[2], rng)
    if spec.kind in _BIDIRECTIONAL_KINDS:
        return _BidirectionalLayer(spec, shape_in[2], rng)
    raise ValueError(f"unknown layer kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Model


@dataclass
class NetModel:
    """Materialized network: spec plus per-layer parameter arrays."""

    spec: NetSpec
    layers: list
    rng_seed: int

    @property
    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def gradients(self):
        return [g for layer in self.layers for g in layer.grads]

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters)

    def forward(self, windows: np.ndarray) -> np.ndarray:
        """Predictions, shape (batch,), for a (batch, T) window matrix."""
        x = self._shape_input(windows)
        for layer in self.layers:
            x = layer.forward(x)
        return x[:, 0]

    def backward(self, dout: np.ndarray) -> None:
        """Accumulate parameter gradients from d(loss)/d(output)."""
        grad = dout[:, None]
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def _shape_input(self, windows: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(windows, dtype=float))
        if x.shape[1] != self.spec.input_length:
            raise ValueError(
                f"window length {x.shape[1]} does not match input length "
                f"{self.spec.input_length}"
            )
        if self.spec.layers[0].kind == "dense":
            return x
        return x[:, :, None]


def _architecture_layers(name: str):
    tail = (flatten(), dense(256, "relu"), dense(1, "linear"))
    table = {
        "cnn1d": (conv1d(235, 16), conv1d(125, 7), maxpool1d(2, 2)) + tail,
        "ffnn": (dense(754, "relu"), dense(646, "relu"), dense(1, "linear")),
        "rnn": (recurrent("rnn", 65), recurrent("rnn", 50)) + tail,
        "lstm": (recurrent("lstm", 15), recurrent("lstm", 49)) + tail,
        "gru": (recurrent("gru", 60), recurrent("gru", 50)) + tail,
        "brnn": (recurrent("rnn", 37, True), recurrent("rnn", 24, True)) + tail,
        "blstm": (recurrent("lstm", 6, True), recurrent("lstm", 24, True)) + tail,
        "bgru": (recurrent("gru", 14, True), recurrent("gru", 25, True)) + tail,
        "crnn": (conv1d(243, 16), recurrent("rnn", 73)) + tail,
        "clstm": (conv1d(28, 16), recurrent("lstm", 71)) + tail,
        "cgru": (conv1d(55, 16), recurrent("gru", 73)) + tail,
        "cbrnn": (conv1d(297, 16), recurrent("rnn", 36, True)) + tail,
        "cblstm": (conv1d(109, 16), recurrent("lstm", 39, True)) + tail,
        "cbgru": (conv1d(55, 16), recurrent("gru", 37, True)) + tail,
    }
    if name not in table:
        raise ValueError(f"unknown architecture {name!r}; known: {sorted(table)}")
    return table[name]


ARCHITECTURES = {
    name: NetSpec(name=name, layers=_architecture_layers(name), input_length=41)
    for name in (
        "cnn1d", "ffnn", "rnn", "lstm", "gru", "brnn", "blstm", "bgru",
        "crnn", "clstm", "cgru", "cbrnn", "cblstm", "cbgru",
    )
}


def build_custom_model(spec: NetSpec, seed: int) -> NetModel:
    rng = np.random.default_rng(seed)
    shapes = _chain_shapes(spec)
    layers = [_build_layer(l, s, rng) for l, s in zip(spec.layers, shapes[:-1])]
    model = NetModel(spec=spec, layers=layers, rng_seed=seed)
    assert model.n_parameters == count_parameters(spec)
    return model


def build_model(architecture_id: str, seed: int, input_length: int = 41) -> NetModel:
    """Xavier-initialized model for one of the benchmark architecture ids."""
    if input_length == 41 and architecture_id in ARCHITECTURES:
        spec = ARCHITECTURES[architecture_id]
    else:
        spec = NetSpec(
            name=architecture_id,
            layers=_architecture_layers(architecture_id),
            input_length=input_length,
        )
    return build_custom_model(spec, seed)


def predict(model: NetModel, windows: np.ndarray) -> np.ndarray:
    return model.forward(windows)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainOpts:
    """Adam settings; defaults match the benchmark protocol."""

    learning_rate: float = 1e-4
    batch_size: int = 128
    epochs: int = 30
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


class _Adam:
    def __init__(self, params, opts: TrainOpts):
        self.opts = opts
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        o = self.opts
        if o.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(g**2)) for g in grads))
            if norm > o.clip_norm:
                scale = o.clip_norm / norm
                grads = [g * scale for g in grads]
        self.t += 1
        bc1 = 1.0 - o.beta1**self.t
        bc2 = 1.0 - o.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= o.beta1
            m += (1.0 - o.beta1) * g
            v *= o.beta2
            v += (1.0 - o.beta2) * g**2
            p -= o.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + o.eps)


def _metrics(model: NetModel, x: np.ndarray, y: np.ndarray, chunk: int = 4096):
    preds = np.concatenate(
        [model.forward(x[i : i + chunk]) for i in range(0, len(x), chunk)]
    )
    err = preds - y
    return float(np.mean(err**2)), float(np.mean(np.abs(err)))


def train(model: NetModel, data: Dataset, opts: TrainOpts, validation: Dataset | None = None):
    """Mini-batch Adam on the MSE loss; returns the per-epoch loss history.

    History rows are dicts with keys epoch, train_mse, val_mse, train_mae,
    val_mae (validation entries are NaN when no validation split is given).
    """
    x, y = data.arrays()
    if x.shape[1] != model.spec.input_length:
        raise ValueError(
            f"dataset window {x.shape[1]} does not match model input "
            f"{model.spec.input_length}"
        )
    x_val, y_val = validation.arrays() if validation is not None else (None, None)
    rng = np.random.default_rng(opts.seed)
    optimizer = _Adam(model.parameters, opts)
    history = []
    for epoch in range(1, opts.epochs + 1):
        order = rng.permutation(len(y))
        for start in range(0, len(y), opts.batch_size):
            batch = order[start : start + opts.batch_size]
            preds = model.forward(x[batch])
            err = preds - y[batch]
            loss = float(np.mean(err**2))
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite training loss at epoch {epoch}, "
                    f"batch index {start // opts.batch_size}"
                )
            model.backward(2.0 * err / len(batch))
            optimizer.step(model.parameters, model.gradients)
        train_mse, train_mae = _metrics(model, x, y)
        if x_val is not None:
            val_mse, val_mae = _metrics(model, x_val, y_val)
        else:
            val_mse = val_mae = float("nan")
        history.append(
            {
                "epoch": epoch,
                "train_mse": train_mse,
                "val_mse": val_mse,
                "train_mae": train_mae,
                "val_mae": val_mae,
            }
        )
    return history


def save_loss_history(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_mse,val_mse,train_mae,val_mae\n")
        for row in history:
            fh.write(
                f"{row['epoch']},{row['train_mse']:.17g},{row['val_mse']:.17g},"
                f"{row['train_mae']:.17g},{row['val_mae']:.17g}\n"
            )


# ---------------------------------------------------------------------------
# Gradient verification


def gradient_check(
    model: NetModel,
    window: np.ndarray,
    label: float,
    epsilon: float = 1e-6,
    max_entries_per_array: int = 64,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Large parameter arrays are probed on a seeded subsample of entries.  The
    loss is the single-sample squared error.
    """
    window = np.asarray(window, dtype=float)[None, :]
    y = float(label)

    def loss():
        return float((model.forward(window)[0] - y) ** 2)

    pred = model.forward(window)
    model.backward(2.0 * (pred - y))
    analytic = [g.copy() for g in model.gradients]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(model.parameters, analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        if flat_p.size > max_entries_per_array:
            entries = rng.choice(flat_p.size, size=max_entries_per_array, replace=False)
        else:
            entries = range(flat_p.size)
        for i in entries:
            orig = flat_p[i]
            flat_p[i] = orig + epsilon
            up = loss()
            flat_p[i] = orig - epsilon
            down = loss()
            flat_p[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(numeric) + abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# Persistence


def _layer_spec_dict(l: LayerSpec) -> dict:
    return {k: getattr(l, k) for k in (
        "kind", "units", "n_kernels", "kernel_size", "stride", "padding",
        "pool_size", "pool_stride", "activation", "return_sequences",
    )}


def save_net_model(model: NetModel, path_prefix) -> None:
    """JSON spec + npz parameter payload with a shape manifest."""
    prefix = str(path_prefix)
    params = model.parameters
    manifest = {
        "name": model.spec.name,
        "input_length": model.spec.input_length,
        "input_channels": model.spec.input_channels,
        "rng_seed": model.rng_seed,
        "layers": [_layer_spec_dict(l) for l in model.spec.layers],
        "shapes": [list(p.shape) for p in params],
    }
    with open(prefix + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    np.savez(prefix + ".npz", **{f"p{i}": p for i, p in enumerate(params)})


def load_net_model(path_prefix) -> NetModel:
    prefix = str(path_prefix)
    with open(prefix + ".json") as fh:
        manifest = json.load(fh)
    layers = tuple(LayerSpec(**d) for d in manifest["layers"])
    spec = NetSpec(
        name=manifest["name"],
        layers=layers,
        input_length=manifest["input_length"],
        input_channels=manifest["input_channels"],
    )
    model = build_custom_model(spec, seed=manifest["rng_seed"])
    payload = np.load(prefix + ".npz")
    params = model.parameters
    if len(params) != len(manifest["shapes"]):
        raise ValueError("parameter manifest does not match the layer stack")
    for i, p in enumerate(params):
        stored = payload[f"p{i}"]
        if list(stored.shape) != manifest["shapes"][i] or stored.shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {i}")
        p[...] = stored
    return model
