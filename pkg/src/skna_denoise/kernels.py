"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public names (``lstm_forward`` etc.) dispatch on the backend chosen in
:mod:`skna_denoise._accel`.  Both flavours are importable directly as
``*_nb`` / ``*_np`` so tests and the benchmark can compare them.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# LSTM recurrence
#
# Gate layout along the last axis is (input, forget, cell, output), each of
# width H.  ``xg`` already holds x_t @ W_ih.T + b for every step, so only the
# recurrent product is inside the loop.
# ---------------------------------------------------------------------------


@njit
def lstm_forward_nb(xg, w_hh_t):
    T, B, G = xg.shape
    H = G // 4
    dt = xg.dtype
    hs = np.zeros((T + 1, B, H), dtype=dt)
    cs = np.zeros((T + 1, B, H), dtype=dt)
    gates = np.empty((T, B, G), dtype=dt)
    tanh_c = np.empty((T, B, H), dtype=dt)
    z = np.empty((B, G), dtype=dt)
    for t in range(T):
        np.dot(hs[t], w_hh_t, z)
        g = gates[t]
        # separate unit-stride loops so each one vectorises
        for b in range(B):
            for j in range(G):
                g[b, j] = z[b, j] + xg[t, b, j]
            for j in range(2 * H):
                g[b, j] = 1.0 / (1.0 + np.exp(-g[b, j]))
            for j in range(2 * H, 3 * H):
                g[b, j] = np.tanh(g[b, j])
            for j in range(3 * H, G):
                g[b, j] = 1.0 / (1.0 + np.exp(-g[b, j]))
            for k in range(H):
                cs[t + 1, b, k] = g[b, H + k] * cs[t, b, k] + g[b, k] * g[b, 2 * H + k]
            for k in range(H):
                tanh_c[t, b, k] = np.tanh(cs[t + 1, b, k])
            for k in range(H):
                hs[t + 1, b, k] = g[b, 3 * H + k] * tanh_c[t, b, k]
    return hs, cs, gates, tanh_c


@njit
def lstm_backward_nb(dhs, cs, gates, tanh_c, w_hh):
    T, B, H = dhs.shape
    dt = dhs.dtype
    dxg = np.empty((T, B, 4 * H), dtype=dt)
    dh_next = np.zeros((B, H), dtype=dt)
    dc_next = np.zeros((B, H), dtype=dt)
    dz = np.empty((B, 4 * H), dtype=dt)
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for k in range(H):
                ig = gates[t, b, k]
                fg = gates[t, b, H + k]
                gg = gates[t, b, 2 * H + k]
                og = gates[t, b, 3 * H + k]
                tc = tanh_c[t, b, k]
                dh = dhs[t, b, k] + dh_next[b, k]
                dc = dh * og * (1.0 - tc * tc) + dc_next[b, k]
                dz[b, k] = dc * gg * ig * (1.0 - ig)
                dz[b, H + k] = dc * cs[t, b, k] * fg * (1.0 - fg)
                dz[b, 2 * H + k] = dc * ig * (1.0 - gg * gg)
                dz[b, 3 * H + k] = dh * tc * og * (1.0 - og)
                dc_next[b, k] = dc * fg
        dxg[t] = dz
        dh_next = np.dot(dz, w_hh)
    return dxg


def _sigmoid_np(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lstm_forward_np(xg, w_hh_t):
    T, B, G = xg.shape
    H = G // 4
    hs = np.zeros((T + 1, B, H), dtype=xg.dtype)
    cs = np.zeros((T + 1, B, H), dtype=xg.dtype)
    gates = np.empty((T, B, G), dtype=xg.dtype)
    tanh_c = np.empty((T, B, H), dtype=xg.dtype)
    for t in range(T):
        z = xg[t] + hs[t] @ w_hh_t
        g = gates[t]
        g[:, : 2 * H] = _sigmoid_np(z[:, : 2 * H])
        g[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        g[:, 3 * H :] = _sigmoid_np(z[:, 3 * H :])
        cs[t + 1] = g[:, H : 2 * H] * cs[t] + g[:, :H] * g[:, 2 * H : 3 * H]
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = g[:, 3 * H :] * tanh_c[t]
    return hs, cs, gates, tanh_c


def lstm_backward_np(dhs, cs, gates, tanh_c, w_hh):
    T, B, H = dhs.shape
    dxg = np.empty((T, B, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros((B, H), dtype=dhs.dtype)
    dc_next = np.zeros((B, H), dtype=dhs.dtype)
    for t in range(T - 1, -1, -1):
        ig = gates[t, :, :H]
        fg = gates[t, :, H : 2 * H]
        gg = gates[t, :, 2 * H : 3 * H]
        og = gates[t, :, 3 * H :]
        tc = tanh_c[t]
        dh = dhs[t] + dh_next
        dc = dh * og * (1.0 - tc * tc) + dc_next
        dz = dxg[t]
        dz[:, :H] = dc * gg * ig * (1.0 - ig)
        dz[:, H : 2 * H] = dc * cs[t] * fg * (1.0 - fg)
        dz[:, 2 * H : 3 * H] = dc * ig * (1.0 - gg * gg)
        dz[:, 3 * H :] = dh * tc * og * (1.0 - og)
        dc_next = dc * fg
        dh_next = dz @ w_hh
    return dxg


# ---------------------------------------------------------------------------
# Leaky integrator  y[n] = a*y[n-1] + (1-a)*|x[n]|,  y[-1] = 0
# ---------------------------------------------------------------------------


@njit
def leaky_integrate_nb(x, a):
    y = np.empty(x.shape[0], dtype=np.float64)
    acc = 0.0
    b = 1.0 - a
    for n in range(x.shape[0]):
        acc = a * acc + b * abs(x[n])
        y[n] = acc
    return y


def leaky_integrate_np(x, a):
    return lfilter([1.0 - a], [1.0, -a], np.abs(np.asarray(x, dtype=np.float64)))


# ---------------------------------------------------------------------------
# Burst statistics over fixed-length windows.
#
# ``windows`` is (n_windows, n_samples).  Per window returns
#   n_runs      number of maximal runs with value > thr
#   n_supra     number of samples with value > thr
#   peak_sum    sum over runs of the run maximum
#   excess_sum  sum over supra-threshold samples of (value - thr)
# Runs are clipped at window edges.
# ---------------------------------------------------------------------------


@njit
def burst_window_stats_nb(windows, thr):
    nw, L = windows.shape
    out = np.zeros((nw, 4), dtype=np.float64)
    for w in range(nw):
        in_run = False
        peak = 0.0
        n_runs = 0
        n_supra = 0
        peak_sum = 0.0
        excess = 0.0
        for i in range(L):
            v = windows[w, i]
            if v > thr:
                n_supra += 1
                excess += v - thr
                if in_run:
                    if v > peak:
                        peak = v
                else:
                    in_run = True
                    peak = v
                    n_runs += 1
            elif in_run:
                peak_sum += peak
                in_run = False
        if in_run:
            peak_sum += peak
        out[w, 0] = n_runs
        out[w, 1] = n_supra
        out[w, 2] = peak_sum
        out[w, 3] = excess
    return out


def burst_window_stats_np(windows, thr):
    windows = np.asarray(windows, dtype=np.float64)
    nw, L = windows.shape
    out = np.zeros((nw, 4))
    if nw == 0 or L == 0:
        return out
    supra = windows > thr
    out[:, 1] = supra.sum(axis=1)
    out[:, 3] = np.where(supra, windows - thr, 0.0).sum(axis=1)
    padded = np.zeros((nw, L + 2), dtype=np.int8)
    padded[:, 1:-1] = supra
    edges = np.diff(padded, axis=1)
    rows_s, starts = np.nonzero(edges == 1)
    _, ends = np.nonzero(edges == -1)
    out[:, 0] = np.bincount(rows_s, minlength=nw)
    if starts.size:
        flat = windows.ravel()
        offs = rows_s * L
        # reduceat needs strictly increasing, non-empty slices; runs are disjoint
        bounds = np.empty(2 * starts.size, dtype=np.int64)
        bounds[0::2] = offs + starts
        bounds[1::2] = offs + ends
        peaks = np.maximum.reduceat(np.append(flat, -np.inf), bounds)[0::2]
        out[:, 2] = np.bincount(rows_s, weights=peaks, minlength=nw)
    return out


# ---------------------------------------------------------------------------
# SMO for the C-SVC dual (second-order working-set selection).
#   min 0.5 a'Qa - e'a,  0 <= a <= C,  y'a = 0,  Q_ij = y_i y_j K_ij
# Returns (alpha, rho, n_iter); decision f(x) = sum_i alpha_i y_i K(x_i, x) - rho.
# ---------------------------------------------------------------------------

_TAU = 1e-12


@njit
def smo_solve_nb(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v >= gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * grad[t]
                if v <= gmin:
                    gmin = v
                if i >= 0:
                    b = gmax - v
                    if b > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = _TAU
                        if -(b * b) / a <= obj_min:
                            obj_min = -(b * b) / a
                            j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(n):
            grad[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)
    return alpha, _rho_nb(alpha, grad, y, C), it


@njit
def _rho_nb(alpha, grad, y, C):
    n = y.shape[0]
    ub = np.inf
    lb = -np.inf
    s = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            s += yg
    if nfree > 0:
        return s / nfree
    return (ub + lb) / 2.0


def smo_solve_np(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    diagK = np.diag(K).copy()
    pos = y > 0
    it = 0
    while it < max_iter:
        ygrad = -y * grad
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        if not up.any() or not low.any():
            break
        cand = np.flatnonzero(up)
        # last maximiser, matching the >= scan of the compiled kernel
        i = cand[len(cand) - 1 - np.argmax(ygrad[cand][::-1])]
        gmax = ygrad[i]
        gmin = ygrad[low].min()
        b = gmax - ygrad
        sel = low & (b > 0)
        if not sel.any() or gmax - gmin < tol:
            break
        a = diagK[i] + diagK - 2.0 * K[i]
        a = np.where(a <= 0, _TAU, a)
        obj = np.where(sel, -(b * b) / a, np.inf)
        cand = np.flatnonzero(obj == obj.min())
        j = cand[-1]
        it += 1
        ai_old, aj_old = alpha[i], alpha[j]
        quad = diagK[i] + diagK[j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            s = ai + aj
            ai -= delta
            aj += delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        grad += y * (y[i] * K[:, i] * (ai - ai_old) + y[j] * K[:, j] * (aj - aj_old))
    return alpha, _rho_np(alpha, grad, y, C), it


def _rho_np(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_c = alpha >= C
    at_0 = alpha <= 0
    ub_mask = (at_c & (y < 0)) | (at_0 & (y > 0))
    lb_mask = (at_c & (y > 0)) | (at_0 & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


if USE_NUMBA:
    lstm_forward = lstm_forward_nb
    lstm_backward = lstm_backward_nb
    leaky_integrate = leaky_integrate_nb
    burst_window_stats = burst_window_stats_nb
    smo_solve = smo_solve_nb
else:
    lstm_forward = lstm_forward_np
    lstm_backward = lstm_backward_np
    leaky_integrate = leaky_integrate_np
    burst_window_stats = burst_window_stats_np
    smo_solve = smo_solve_np
