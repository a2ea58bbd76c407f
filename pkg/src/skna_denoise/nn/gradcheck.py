"""Central finite-difference checks of the layer gradients."""
from __future__ import annotations

import numpy as np

from .layers import KINDS, LayerSpec, build_layer

REL_FLOOR = 1e-4


def _numeric(f, arr, h):
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(analytic, numeric, floor=REL_FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_layer(layer, inputs, h=1e-4, seed=0) -> float:
    """Largest relative error over every input and parameter gradient.

    The scalar objective is sum(output * R) for a fixed random R.  Layers with
    an ``rng`` (dropout) are rewound before every forward so the mask is fixed.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    rng_state = layer.rng.bit_generator.state if hasattr(layer, "rng") else None

    def run(train=True):
        if rng_state is not None:
            layer.rng.bit_generator.state = rng_state
        return layer.forward(*inputs, train=train)

    y = run()
    R = np.random.default_rng(seed).standard_normal(y.shape)
    layer._cache = None

    def objective():
        out = run()
        layer._cache = None
        return float(np.sum(out * R))

    layer.zero_grad()
    run()
    dx = layer.backward(R)
    if not isinstance(dx, tuple):
        dx = (dx,)
    analytic_params = {k: v.copy() for k, v in layer.grads.items()}
    worst = 0.0
    for x, g in zip(inputs, dx):
        worst = max(worst, max_rel_error(g, _numeric(objective, x, h)))
    for name, p in layer.params.items():
        worst = max(worst, max_rel_error(analytic_params[name], _numeric(objective, p, h)))
    return worst


def random_case(kind: str, rng) -> tuple:
    """A random small (layer, inputs) pair: batch <= 2, channels <= 4, time <= 16."""
    B = int(rng.integers(1, 3))
    C = int(rng.integers(1, 5))
    T = int(rng.integers(4, 17))
    seed = int(rng.integers(2**31))
    x = rng.standard_normal((B, C, T))
    if kind == "conv1d":
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        spec = LayerSpec(kind, C, int(rng.integers(1, 5)), k, s, p)
    elif kind == "deconv1d":
        s = int(rng.integers(1, 3))
        spec = LayerSpec(kind, C, int(rng.integers(1, 5)), int(rng.integers(1, 4)), s,
                         int(rng.integers(0, 2)), int(rng.integers(0, s)))
        x = x[:, :, : max(2, T // 2)]
    elif kind == "batchnorm1d":
        spec = LayerSpec(kind, C)
    elif kind == "dropout":
        spec = LayerSpec(kind, rate=float(rng.uniform(0.0, 0.9)))
    elif kind == "relu":
        x = np.sign(x) * (np.abs(x) + 1e-2)
        spec = LayerSpec(kind)
    elif kind in ("lstm", "bilstm"):
        spec = LayerSpec(kind, C, hidden_size=int(rng.integers(1, 5)))
    elif kind == "residual_add":
        return build_layer(LayerSpec(kind)), [x, rng.standard_normal(x.shape)]
    else:
        raise ValueError(kind)
    layer = build_layer(spec, rng=seed, dtype=np.float64)
    if kind == "batchnorm1d":
        layer.params["gamma"][:] = rng.uniform(0.5, 1.5, C)
        layer.params["beta"][:] = rng.standard_normal(C)
    return layer, [x]


def gradient_soundness(n_configs: int = 50, seed: int = 0, h: float = 1e-4) -> dict:
    """Worst relative error per layer kind over random configurations."""
    rng = np.random.default_rng(seed)
    out = {}
    for kind in KINDS:
        worst = 0.0
        for _ in range(n_configs):
            layer, inputs = random_case(kind, rng)
            worst = max(worst, check_layer(layer, inputs, h=h, seed=int(rng.integers(2**31))))
        out[kind] = worst
    return out
