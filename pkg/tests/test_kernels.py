"""Both kernel flavours must agree; the env flag must select between them."""
import os
import subprocess
import sys

import numpy as np
import pytest

from skna_denoise import kernels
from skna_denoise.classify import rbf_kernel


def lstm_inputs(rng, T=12, B=3, H=4, dtype=np.float64):
    xg = rng.standard_normal((T, B, 4 * H)).astype(dtype)
    w_hh_t = (0.5 * rng.standard_normal((H, 4 * H))).astype(dtype)
    return xg, w_hh_t


@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-12), (np.float32, 1e-5)])
def test_lstm_forward_agree(rng, dtype, tol):
    xg, w = lstm_inputs(rng, dtype=dtype)
    a = kernels.lstm_forward_nb(xg, w)
    b = kernels.lstm_forward_np(xg, w)
    for u, v in zip(a, b):
        assert u.shape == v.shape and u.dtype == v.dtype
        assert np.max(np.abs(u - v)) <= tol


def test_lstm_forward_reference_step(rng):
    # one step from zero state against the textbook gate equations
    xg, w = lstm_inputs(rng, T=1, B=1, H=2)
    hs, cs, _, _ = kernels.lstm_forward_np(xg, w)
    z = xg[0, 0]
    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    i, f, g, o = sig(z[0:2]), sig(z[2:4]), np.tanh(z[4:6]), sig(z[6:8])
    c = i * g
    assert np.allclose(cs[1, 0], c) and np.allclose(hs[1, 0], o * np.tanh(c))
    assert not hs[0].any() and not cs[0].any()


def test_lstm_backward_agree(rng):
    xg, w = lstm_inputs(rng)
    hs, cs, gates, tanh_c = kernels.lstm_forward_np(xg, w)
    dhs = rng.standard_normal(hs[1:].shape)
    w_hh = np.ascontiguousarray(w.T)
    a = kernels.lstm_backward_nb(dhs, cs, gates, tanh_c, w_hh)
    b = kernels.lstm_backward_np(dhs, cs, gates, tanh_c, w_hh)
    assert np.allclose(a, b, atol=1e-12)


def test_leaky_integrate_agree(rng):
    x = np.abs(rng.standard_normal(5000))
    a = kernels.leaky_integrate_nb(x, 0.99)
    b = kernels.leaky_integrate_np(x, 0.99)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    y = np.zeros(3)
    y[0] = 0.01 * x[0]
    y[1] = 0.99 * y[0] + 0.01 * x[1]
    y[2] = 0.99 * y[1] + 0.01 * x[2]
    assert np.allclose(a[:3], y)


def test_burst_stats_agree(rng):
    w = np.abs(np.cumsum(rng.standard_normal((7, 400)), axis=1))
    thr = float(np.median(w))
    a, b = kernels.burst_window_stats_nb(w, thr), kernels.burst_window_stats_np(w, thr)
    assert np.array_equal(a[:, :2], b[:, :2])
    assert np.allclose(a[:, 2:], b[:, 2:], rtol=1e-12, atol=0)
    edge = np.array([[5.0, 5.0, 0.0, 5.0], [0.0, 0.0, 0.0, 0.0]])
    out = kernels.burst_window_stats_np(edge, 1.0)
    assert np.array_equal(out, [[2, 3, 10, 12], [0, 0, 0, 0]])
    assert np.array_equal(kernels.burst_window_stats_nb(edge, 1.0), out)


def test_smo_agree(rng):
    X = rng.standard_normal((60, 3))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    K = rbf_kernel(X, X, 0.5)
    a1, r1, _ = kernels.smo_solve_nb(K, y, 1.0, 1e-3, 100_000)
    a2, r2, _ = kernels.smo_solve_np(K, y, 1.0, 1e-3, 100_000)
    assert np.allclose(a1, a2, atol=1e-10) and r1 == pytest.approx(r2, abs=1e-10)
    assert np.all((a1 >= 0) & (a1 <= 1.0)) and abs(np.dot(a1, y)) < 1e-9


@pytest.mark.parametrize("flag,expected", [("numpy", "numpy"), ("numba", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, SKNA_DENOISE_BACKEND=flag)
    code = "import skna_denoise, skna_denoise.kernels as k; print(skna_denoise.BACKEND, k.lstm_forward.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, fn = out.stdout.split()
    assert backend == expected
    assert fn.endswith("_np" if expected == "numpy" else "_nb")


def test_env_flag_rejects_unknown():
    env = dict(os.environ, SKNA_DENOISE_BACKEND="cuda")
    out = subprocess.run([sys.executable, "-c", "import skna_denoise"], env=env, capture_output=True, text=True)
    assert out.returncode != 0 and "SKNA_DENOISE_BACKEND" in out.stderr
