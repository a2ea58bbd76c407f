"""Layer library with hand-written reverse-mode gradients.

Tensors are ``(batch, channels, time)`` arrays.  Every layer caches what its
backward pass needs during ``forward`` and accumulates parameter gradients
into ``grads`` (additively, until :meth:`Layer.zero_grad`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ShapeError, StateError

KINDS = ("conv1d", "deconv1d", "batchnorm1d", "dropout", "relu", "lstm", "bilstm", "residual_add")


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict = {}
        self.grads: dict = {}
        self._cache = None

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _init_grads(self):
        self.zero_grad()

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before a training-mode forward")
        cache, self._cache = self._cache, None
        return cache

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def _check3(x, channels, name):
    if x.ndim != 3:
        raise ShapeError(f"{name} expects (batch, channels, time), got shape {x.shape}")
    if channels is not None and x.shape[1] != channels:
        raise ShapeError(f"{name} expects {channels} channels, got {x.shape[1]}")


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_ch, out_ch, kernel=3, stride=2, padding=1, rng=None, dtype=np.float64):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.in_ch, self.out_ch, self.k, self.s, self.p = in_ch, out_ch, kernel, stride, padding
        bound = np.sqrt(1.0 / (in_ch * kernel))
        self.params["weight"] = rng.uniform(-bound, bound, (out_ch, in_ch, kernel)).astype(dtype)
        self.params["bias"] = rng.uniform(-bound, bound, out_ch).astype(dtype)
        self._init_grads()

    def out_len(self, L):
        return (L + 2 * self.p - self.k) // self.s + 1

    def forward(self, x, train=False):
        _check3(x, self.in_ch, "conv1d")
        B, C, L = x.shape
        Lout = self.out_len(L)
        if Lout < 1:
            raise ShapeError(f"conv1d input of length {L} too short")
        xp = np.pad(x, ((0, 0), (0, 0), (self.p, self.p)))
        idx = np.arange(self.k)[:, None] + self.s * np.arange(Lout)[None, :]
        cols = xp[:, :, idx].reshape(B, C * self.k, Lout)
        W = self.params["weight"].reshape(self.out_ch, -1)
        y = np.matmul(W, cols) + self.params["bias"][None, :, None]
        if train:
            self._cache = (cols, L, Lout)
        return y

    def backward(self, dy):
        cols, L, Lout = self._take_cache()
        B = dy.shape[0]
        W = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] += np.tensordot(dy, cols, axes=([0, 2], [0, 2])).reshape(self.params["weight"].shape)
        self.grads["bias"] += dy.sum(axis=(0, 2))
        dcols = np.matmul(W.T, dy).reshape(B, self.in_ch, self.k, Lout)
        dxp = np.zeros((B, self.in_ch, L + 2 * self.p), dtype=dy.dtype)
        for j in range(self.k):
            dxp[:, :, j : j + self.s * (Lout - 1) + 1 : self.s] += dcols[:, :, j, :]
        return dxp[:, :, self.p : self.p + L]


class ConvTranspose1d(Layer):
    kind = "deconv1d"

    def __init__(self, in_ch, out_ch, kernel=3, stride=2, padding=1, output_padding=1, rng=None,
                 dtype=np.float64):
        super().__init__()
        if not output_padding < max(stride, 1):
            raise ValueError("output_padding must be smaller than stride")
        rng = np.random.default_rng(rng)
        self.in_ch, self.out_ch, self.k, self.s = in_ch, out_ch, kernel, stride
        self.p, self.op = padding, output_padding
        bound = np.sqrt(1.0 / (in_ch * kernel))
        self.params["weight"] = rng.uniform(-bound, bound, (in_ch, out_ch, kernel)).astype(dtype)
        self.params["bias"] = rng.uniform(-bound, bound, out_ch).astype(dtype)
        self._init_grads()

    def out_len(self, L):
        return (L - 1) * self.s - 2 * self.p + self.k + self.op

    def _wm(self):
        # (out*k, in): row o*k + j holds weight[:, o, j]
        return self.params["weight"].transpose(1, 2, 0).reshape(self.out_ch * self.k, self.in_ch)

    def forward(self, x, train=False):
        _check3(x, self.in_ch, "deconv1d")
        B, C, L = x.shape
        Lout = self.out_len(L)
        contrib = np.matmul(self._wm(), x).reshape(B, self.out_ch, self.k, L)
        full = np.zeros((B, self.out_ch, max((L - 1) * self.s + self.k, self.p + Lout)), dtype=contrib.dtype)
        for j in range(self.k):
            full[:, :, j : j + self.s * (L - 1) + 1 : self.s] += contrib[:, :, j, :]
        y = full[:, :, self.p : self.p + Lout] + self.params["bias"][None, :, None]
        if train:
            self._cache = (x, full.shape[2], Lout)
        return y

    def backward(self, dy):
        x, full_len, Lout = self._take_cache()
        B, C, L = x.shape
        dfull = np.zeros((B, self.out_ch, full_len), dtype=dy.dtype)
        dfull[:, :, self.p : self.p + Lout] = dy
        dcontrib = np.empty((B, self.out_ch, self.k, L), dtype=dy.dtype)
        for j in range(self.k):
            dcontrib[:, :, j, :] = dfull[:, :, j : j + self.s * (L - 1) + 1 : self.s]
        dcontrib = dcontrib.reshape(B, self.out_ch * self.k, L)
        dwm = np.tensordot(dcontrib, x, axes=([0, 2], [0, 2]))  # (out*k, in)
        self.grads["weight"] += dwm.reshape(self.out_ch, self.k, self.in_ch).transpose(2, 0, 1)
        self.grads["bias"] += dy.sum(axis=(0, 2))
        return np.matmul(self._wm().T, dcontrib)


class BatchNorm1d(Layer):
    kind = "batchnorm1d"

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float64):
        super().__init__()
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._init_grads()

    def forward(self, x, train=False):
        _check3(x, self.channels, "batchnorm1d")
        g = self.params["gamma"][None, :, None]
        b = self.params["beta"][None, :, None]
        if not train:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean[None, :, None]) * (inv[None, :, None] * g) + b
        n = x.shape[0] * x.shape[2]
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[None, :, None]) * inv[None, :, None]
        m = self.momentum
        self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(self.running_mean.dtype)
        unbiased = var * n / max(n - 1, 1)
        self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(self.running_var.dtype)
        self._cache = (xhat, inv, n)
        return xhat * g + b

    def backward(self, dy):
        xhat, inv, n = self._take_cache()
        self.grads["gamma"] += (dy * xhat).sum(axis=(0, 2))
        self.grads["beta"] += dy.sum(axis=(0, 2))
        dxhat = dy * self.params["gamma"][None, :, None]
        s1 = dxhat.sum(axis=(0, 2))[None, :, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
        return (inv[None, :, None] / n) * (n * dxhat - s1 - xhat * s2)


class Dropout(Layer):
    """Inverted dropout; the identity in eval mode."""

    kind = "dropout"

    def __init__(self, rate, rng=None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(rng)

    def forward(self, x, train=False):
        if not train:
            return x
        if self.rate == 0.0:
            mask = np.ones_like(x)
        else:
            mask = (self.rng.random(x.shape) >= self.rate).astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._take_cache()


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        return dy * self._take_cache()


class LSTM(Layer):
    """Single-direction LSTM over the time axis; emits every hidden state."""

    kind = "lstm"

    def __init__(self, input_size, hidden_size, reverse=False, rng=None, dtype=np.float64):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.input_size, self.hidden, self.reverse = input_size, hidden_size, reverse
        bound = np.sqrt(1.0 / hidden_size)
        H = hidden_size
        self.params["w_ih"] = rng.uniform(-bound, bound, (4 * H, input_size)).astype(dtype)
        self.params["w_hh"] = rng.uniform(-bound, bound, (4 * H, H)).astype(dtype)
        self.params["bias"] = rng.uniform(-bound, bound, 4 * H).astype(dtype)
        self.params["bias"][H : 2 * H] = 0.0  # forget-gate bias starts at zero
        self._init_grads()

    def forward(self, x, train=False):
        _check3(x, self.input_size, "lstm")
        dtype = self.params["w_ih"].dtype
        xs = x.transpose(2, 0, 1).astype(dtype, copy=False)
        if self.reverse:
            xs = xs[::-1]
        xs = np.ascontiguousarray(xs)
        xg = np.ascontiguousarray(xs @ self.params["w_ih"].T + self.params["bias"])
        hs, cs, gates, tanh_c = kernels.lstm_forward(xg, np.ascontiguousarray(self.params["w_hh"].T))
        out = hs[1:]
        if self.reverse:
            out = out[::-1]
        if train:
            self._cache = (xs, hs, cs, gates, tanh_c)
        return np.ascontiguousarray(out.transpose(1, 2, 0))

    def backward(self, dy):
        xs, hs, cs, gates, tanh_c = self._take_cache()
        dhs = dy.transpose(2, 0, 1).astype(xs.dtype, copy=False)
        if self.reverse:
            dhs = dhs[::-1]
        dxg = kernels.lstm_backward(np.ascontiguousarray(dhs), cs, gates, tanh_c,
                                    np.ascontiguousarray(self.params["w_hh"]))
        self.grads["w_hh"] += np.tensordot(dxg, hs[:-1], axes=([0, 1], [0, 1]))
        self.grads["w_ih"] += np.tensordot(dxg, xs, axes=([0, 1], [0, 1]))
        self.grads["bias"] += dxg.sum(axis=(0, 1))
        dxs = dxg @ self.params["w_ih"]
        if self.reverse:
            dxs = dxs[::-1]
        return np.ascontiguousarray(dxs.transpose(1, 2, 0))


class BiLSTM(Layer):
    """Forward and time-reversed LSTMs, outputs stacked on the channel axis."""

    kind = "bilstm"

    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float64):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.input_size, self.hidden = input_size, hidden_size
        self.fwd = LSTM(input_size, hidden_size, reverse=False, rng=rng, dtype=dtype)
        self.bwd = LSTM(input_size, hidden_size, reverse=True, rng=rng, dtype=dtype)
        self._link()

    def _link(self):
        self.params = {f"fwd.{k}": v for k, v in self.fwd.params.items()}
        self.params.update({f"bwd.{k}": v for k, v in self.bwd.params.items()})
        self.grads = {f"fwd.{k}": v for k, v in self.fwd.grads.items()}
        self.grads.update({f"bwd.{k}": v for k, v in self.bwd.grads.items()})

    def zero_grad(self):
        self.fwd.zero_grad()
        self.bwd.zero_grad()
        self._link()

    def forward(self, x, train=False):
        return np.concatenate([self.fwd.forward(x, train), self.bwd.forward(x, train)], axis=1)

    def backward(self, dy):
        H = self.hidden
        return self.fwd.backward(dy[:, :H]) + self.bwd.backward(dy[:, H:])


class ResidualAdd(Layer):
    kind = "residual_add"

    def forward(self, a, b, train=False):
        if a.shape != b.shape:
            raise ShapeError(f"residual junction shapes differ: {a.shape} vs {b.shape}")
        if train:
            self._cache = True
        return a + b

    def backward(self, dy):
        self._take_cache()
        return dy, dy


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 3
    stride: int = 2
    padding: int = 1
    output_padding: int = 1
    hidden_size: int = 0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def build_layer(spec: LayerSpec, rng=None, dtype=np.float64) -> Layer:
    k = spec.kind
    if k == "conv1d":
        return Conv1d(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding, rng, dtype)
    if k == "deconv1d":
        return ConvTranspose1d(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding,
                               spec.output_padding, rng, dtype)
    if k == "batchnorm1d":
        return BatchNorm1d(spec.in_channels, dtype=dtype)
    if k == "dropout":
        return Dropout(spec.rate, rng)
    if k == "relu":
        return ReLU()
    if k == "lstm":
        return LSTM(spec.in_channels, spec.hidden_size, rng=rng, dtype=dtype)
    if k == "bilstm":
        return BiLSTM(spec.in_channels, spec.hidden_size, rng=rng, dtype=dtype)
    return ResidualAdd()


def layer_forward(layer: Layer, *inputs, mode="eval"):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return layer.forward(*inputs, train=(mode == "train"))


def layer_backward(layer: Layer, upstream):
    """Input gradient(s); parameter gradients land in ``layer.grads``."""
    return layer.backward(upstream)
