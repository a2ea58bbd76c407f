"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--no-train-step]

Per-kernel timings call both flavours in one process. The train-step line
runs a fresh interpreter per backend with SKNA_DENOISE_BACKEND set, since
the flag is read at import time.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from skna_denoise import kernels
from skna_denoise.classify import rbf_kernel

TRAIN_STEP = """
import time
import numpy as np
from skna_denoise.denoiser import build_model
from skna_denoise.nn import AdamState, adam_step, mse_grad
m = build_model(0)
x = np.random.default_rng(0).standard_normal((32, 1, 2048)).astype(np.float32)
state, params = AdamState(lr=1e-3), m.parameters()
def step():
    m.zero_grad()
    pred = m.forward(x, train=True)
    m.backward(mse_grad(pred, x).astype(np.float32))
    adam_step(state, params, m.gradients())
step()
t0 = time.perf_counter()
for _ in range({n}):
    step()
print((time.perf_counter() - t0) / {n})
"""


def cases(rng):
    T, B, H = 512, 32, 32
    xg = rng.standard_normal((T, B, 4 * H)).astype(np.float32)
    w_hh_t = (0.2 * rng.standard_normal((H, 4 * H))).astype(np.float32)
    hs, cs, gates, tanh_c = kernels.lstm_forward_np(xg, w_hh_t)
    dhs = rng.standard_normal(hs[1:].shape).astype(np.float32)
    w_hh = np.ascontiguousarray(w_hh_t.T)
    x = np.abs(rng.standard_normal(840 * 2048))
    win = np.abs(rng.standard_normal((84, 20480))).cumsum(axis=1) % 3.0
    X = rng.standard_normal((300, 6))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    K = rbf_kernel(X, X, 1.0 / 6)
    return {
        "lstm_forward (T=512,B=32,H=32)": ("lstm_forward", (xg, w_hh_t)),
        "lstm_backward (T=512,B=32,H=32)": ("lstm_backward", (dhs, cs, gates, tanh_c, w_hh)),
        "leaky_integrate (1.7M samples)": ("leaky_integrate", (x, 0.995)),
        "burst_window_stats (84 x 20480)": ("burst_window_stats", (win, 2.0)),
        "smo_solve (n=300)": ("smo_solve", (K, y, 1.0, 1e-3, 100_000)),
    }


def best_of(fn, args, repeat):
    fn(*args)  # compile / warm caches
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def train_step_time(backend, n):
    env = {**os.environ, "SKNA_DENOISE_BACKEND": backend}
    out = subprocess.run([sys.executable, "-c", TRAIN_STEP.format(n=n)], env=env, capture_output=True, text=True,
                         check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-train-step", action="store_true")
    ap.add_argument("--steps", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for label, (name, a) in cases(rng).items():
        t_nb = best_of(getattr(kernels, name + "_nb"), a, args.repeat)
        t_np = best_of(getattr(kernels, name + "_np"), a, args.repeat)
        print(f"{label:36s} {1e3 * t_nb:10.2f} {1e3 * t_np:10.2f} {t_np / t_nb:7.1f}x")
    if not args.no_train_step:
        t_nb, t_np = (train_step_time(b, args.steps) for b in ("numba", "numpy"))
        print(f"{'train step (batch 32, full model)':36s} {1e3 * t_nb:10.2f} {1e3 * t_np:10.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
