"""Conv-LSTM denoising autoencoder: wiring, training, inference and
overlap-add reconstruction."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import ModelSection, RecordingContainer, read_container, write_container
from .dsp import CONDITIONS, NormStats, Period, SampledSignal, SegmentSet
from .errors import DiscontinuityError, FormatError, NonFiniteError, PairingError, ShapeError
from .nn import (AdamState, BalancedBatchSampler, BatchNorm1d, BiLSTM, Conv1d, ConvTranspose1d, Dropout,
                 LSTM, ReLU, ResidualAdd, adam_step, mse_grad, mse_loss)

log = logging.getLogger(__name__)

WINDOW_LEN = 2048


class DenoiserModel:
    """enc1 -> enc2 -> BiLSTM -> LSTM -> (+enc2) dec1 -> (+enc1) dec2."""

    def __init__(self, seed: int = 0, dtype=np.float32, window_len: int = WINDOW_LEN):
        self.dtype = np.dtype(dtype)
        self.window_len = int(window_len)
        self.seed = int(seed)
        self.norm_stats: NormStats | None = None
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(10)]
        dt = self.dtype
        self.enc1_conv = Conv1d(1, 16, 3, 2, 1, rng=rngs[0], dtype=dt)
        self.enc1_bn = BatchNorm1d(16, dtype=dt)
        self.enc1_drop = Dropout(0.2, rng=rngs[1])
        self.enc1_relu = ReLU()
        self.enc2_conv = Conv1d(16, 32, 3, 2, 1, rng=rngs[2], dtype=dt)
        self.enc2_bn = BatchNorm1d(32, dtype=dt)
        self.enc2_drop = Dropout(0.2, rng=rngs[3])
        self.enc2_relu = ReLU()
        self.bilstm = BiLSTM(32, 32, rng=rngs[4], dtype=dt)
        self.lstm = LSTM(64, 32, rng=rngs[5], dtype=dt)
        self.res2 = ResidualAdd()
        self.dec1_deconv = ConvTranspose1d(32, 16, 3, 2, 1, 1, rng=rngs[6], dtype=dt)
        self.dec1_bn = BatchNorm1d(16, dtype=dt)
        self.dec1_drop = Dropout(0.1, rng=rngs[7])
        self.dec1_relu = ReLU()
        self.res1 = ResidualAdd()
        self.dec2_deconv = ConvTranspose1d(16, 1, 3, 2, 1, 1, rng=rngs[8], dtype=dt)
        self._check_junctions()

    LAYER_ORDER = ("enc1_conv", "enc1_bn", "enc1_drop", "enc1_relu", "enc2_conv", "enc2_bn", "enc2_drop",
                   "enc2_relu", "bilstm", "lstm", "res2", "dec1_deconv", "dec1_bn", "dec1_drop", "dec1_relu",
                   "res1", "dec2_deconv")

    def layers(self):
        return [(name, getattr(self, name)) for name in self.LAYER_ORDER]

    def shape_trace(self, L: int | None = None) -> dict:
        """(channels, time) after each stage for a single-channel input of length L."""
        L = self.window_len if L is None else L
        l1 = self.enc1_conv.out_len(L)
        l2 = self.enc2_conv.out_len(l1)
        l3 = self.dec1_deconv.out_len(l2)
        return {"input": (1, L), "enc1": (16, l1), "enc2": (32, l2), "bilstm": (64, l2), "lstm": (32, l2),
                "dec1": (16, l3), "dec2": (1, self.dec2_deconv.out_len(l3))}

    def _check_junctions(self):
        tr = self.shape_trace()
        if tr["lstm"] != tr["enc2"] or tr["dec1"] != tr["enc1"] or tr["dec2"] != tr["input"]:
            raise ShapeError(f"residual junctions do not line up for window {self.window_len}: {tr}")

    # -- parameters -------------------------------------------------------

    def named_parameters(self):
        for name, layer in self.layers():
            for pname, arr in layer.params.items():
                yield f"{name}.{pname}", arr

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def gradients(self) -> list:
        return [layer.grads[p] for _, layer in self.layers() for p in layer.params]

    def zero_grad(self):
        for _, layer in self.layers():
            layer.zero_grad()

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_arrays(self):
        """Parameters then batch-norm running statistics, in layer order."""
        for name, arr in self.named_parameters():
            yield name, arr
        for name, layer in self.layers():
            if isinstance(layer, BatchNorm1d):
                yield f"{name}.running_mean", layer.running_mean
                yield f"{name}.running_var", layer.running_var

    # -- passes -----------------------------------------------------------

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[:, None, :]
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeError(f"expected (batch, 1, time) input, got {x.shape}")
        a = self.enc1_relu.forward(self.enc1_drop.forward(self.enc1_bn.forward(
            self.enc1_conv.forward(x, train), train), train), train)
        b = self.enc2_relu.forward(self.enc2_drop.forward(self.enc2_bn.forward(
            self.enc2_conv.forward(a, train), train), train), train)
        h = self.lstm.forward(self.bilstm.forward(b, train), train)
        d = self.dec1_relu.forward(self.dec1_drop.forward(self.dec1_bn.forward(
            self.dec1_deconv.forward(self.res2.forward(h, b, train), train), train), train), train)
        return self.dec2_deconv.forward(self.res1.forward(d, a, train), train)

    def backward(self, dy):
        dd, da = self.res1.backward(self.dec2_deconv.backward(dy))
        g = self.dec1_relu.backward(dd)
        g = self.dec1_bn.backward(self.dec1_drop.backward(g))
        dh, db = self.res2.backward(self.dec1_deconv.backward(g))
        db = db + self.bilstm.backward(self.lstm.backward(dh))
        g = self.enc2_bn.backward(self.enc2_drop.backward(self.enc2_relu.backward(db)))
        da = da + self.enc2_conv.backward(g)
        g = self.enc1_bn.backward(self.enc1_drop.backward(self.enc1_relu.backward(da)))
        return self.enc1_conv.backward(g)


def build_model(seed: int = 0, dtype=np.float32, window_len: int = WINDOW_LEN) -> DenoiserModel:
    return DenoiserModel(seed, dtype, window_len)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class TrainReport:
    epoch_loss: list = field(default_factory=list)
    wall_time_s: float = 0.0
    n_steps: int = 0
    checkpoint: str | None = None


def _check_pairing(noisy: SegmentSet, clean: SegmentSet):
    if len(noisy) != len(clean) or noisy.window_len != clean.window_len:
        raise PairingError(f"noisy ({len(noisy)}) and clean ({len(clean)}) sets are not paired")
    for name in ("labels", "subjects", "starts", "period_ids"):
        if not np.array_equal(getattr(noisy, name), getattr(clean, name)):
            raise PairingError(f"noisy and clean sets disagree on {name}")


def train(model: DenoiserModel, noisy_train: SegmentSet, clean_train: SegmentSet, cfg: TrainConfig,
          progress=None) -> TrainReport:
    """MSE/Adam training over class-balanced batches; inputs already normalised."""
    _check_pairing(noisy_train, clean_train)
    if noisy_train.window_len != model.window_len:
        raise ShapeError(f"window length {noisy_train.window_len} != model window {model.window_len}")
    sampler = BalancedBatchSampler(noisy_train.labels, cfg.batch_size, seed=cfg.seed)
    state = AdamState(lr=cfg.lr)
    X = noisy_train.segments.astype(model.dtype)
    Y = clean_train.segments.astype(model.dtype)
    report = TrainReport()
    t0 = time.perf_counter()
    params = model.parameters()
    for epoch in range(cfg.epochs):
        total, nb = 0.0, 0
        for bi, idx in enumerate(sampler.epoch()):
            x = X[idx][:, None, :]
            t = Y[idx][:, None, :]
            model.zero_grad()
            pred = model.forward(x, train=True)
            loss = mse_loss(pred, t)
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch + 1}, batch {bi + 1}")
            model.backward(mse_grad(pred, t).astype(model.dtype, copy=False))
            try:
                adam_step(state, params, model.gradients())
            except NonFiniteError as exc:
                raise NonFiniteError(f"{exc} at epoch {epoch + 1}, batch {bi + 1}") from None
            total += loss
            nb += 1
            report.n_steps += 1
        report.epoch_loss.append(total / max(nb, 1))
        if progress is not None:
            progress(epoch + 1, report.epoch_loss[-1])
        log.debug("epoch %d loss %.5f", epoch + 1, report.epoch_loss[-1])
    report.wall_time_s = time.perf_counter() - t0
    return report


def predict(model: DenoiserModel, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode forward over rows of ``x`` (n, window)."""
    x = np.asarray(x)
    out = np.empty(x.shape, dtype=np.float64)
    for s in range(0, x.shape[0], batch_size):
        out[s : s + batch_size] = model.forward(x[s : s + batch_size, None, :], train=False)[:, 0, :]
    return out


def denoise_segments(model: DenoiserModel, noisy: SegmentSet, batch_size: int = 64) -> SegmentSet:
    if noisy.window_len != model.window_len:
        raise ShapeError(f"window length {noisy.window_len} != model window {model.window_len}")
    return noisy.with_segments(predict(model, noisy.segments, batch_size))


def crossfade_weights(win: int, hop: int, first: bool, last: bool) -> np.ndarray:
    """Triangular weights that sum to one with the neighbouring windows."""
    w = np.ones(win)
    if hop == win:
        return w
    ramp = (np.arange(win - hop) + 0.5) / (win - hop)
    if not first:
        w[: win - hop] = ramp
    if not last:
        w[hop:] = ramp[::-1]
    return w


def overlap_add(outputs: SegmentSet, overlap: float | None = None,
                norm_stats: NormStats | None = None) -> SampledSignal:
    """Stitch one subject's windows back into a continuous trace.

    Each labelled period's window chain is cross-faded and the chains are
    concatenated in order; ``norm_stats`` (if given) undoes z-scoring.
    """
    overlap = outputs.overlap if overlap is None else overlap
    if overlap not in (0.0, 0.5):
        raise ValueError(f"overlap must be 0.0 or 0.5, got {overlap}")
    if len(np.unique(outputs.subjects)) > 1:
        raise ValueError("overlap_add works on a single subject's windows")
    win = outputs.window_len
    hop = win if overlap == 0.0 else win // 2
    pieces, periods, pos = [], [], 0
    missing = []
    for pid in sorted(np.unique(outputs.period_ids)):
        rows = np.flatnonzero(outputs.period_ids == pid)
        rows = rows[np.argsort(outputs.seg_index[rows], kind="stable")]
        idx = outputs.seg_index[rows]
        expected = np.arange(idx.max() + 1)
        gap = np.setdiff1d(expected, idx)
        if gap.size:
            missing.extend((int(pid), int(k)) for k in gap)
            continue
        if np.any(np.diff(outputs.starts[rows]) != hop):
            raise DiscontinuityError(f"period {pid}: window starts are not spaced by {hop}")
        n = len(rows)
        span = (n - 1) * hop + win
        acc = np.zeros(span)
        for k, r in enumerate(rows):
            acc[k * hop : k * hop + win] += crossfade_weights(win, hop, k == 0, k == n - 1) * outputs.segments[r]
        pieces.append(acc)
        periods.append(Period(pos, pos + span, CONDITIONS[int(outputs.labels[rows[0]])]))
        pos += span
    if missing:
        raise DiscontinuityError(f"missing windows (period, index): {missing}", missing)
    x = np.concatenate(pieces) if pieces else np.zeros(0)
    if norm_stats is not None:
        x = x * norm_stats.std + norm_stats.mean
    return SampledSignal(x, outputs.fs, periods)


# -- checkpoints -------------------------------------------------------------


def checkpoint_section(model: DenoiserModel) -> ModelSection:
    names, shapes, chunks = [], [], []
    for name, arr in model.state_arrays():
        names.append(name)
        shapes.append(list(arr.shape))
        chunks.append(np.asarray(arr, dtype="<f4").ravel())
    manifest = {
        "architecture": "conv-lstm-ae-v1",
        "window_len": model.window_len,
        "seed": model.seed,
        "tensors": [{"name": n, "shape": s} for n, s in zip(names, shapes)],
        "norm_stats": None if model.norm_stats is None else
        {"mean": model.norm_stats.mean, "std": model.norm_stats.std},
    }
    return ModelSection(manifest, np.concatenate(chunks))


def model_from_section(section: ModelSection, dtype=np.float32) -> DenoiserModel:
    mm = section.manifest
    if mm.get("architecture") != "conv-lstm-ae-v1":
        raise FormatError(f"unknown architecture {mm.get('architecture')!r}")
    model = DenoiserModel(mm.get("seed", 0), dtype, mm["window_len"])
    targets = dict(model.state_arrays())
    pos = 0
    for t in mm["tensors"]:
        if t["name"] not in targets:
            raise FormatError(f"unexpected tensor {t['name']!r}")
        arr = targets[t["name"]]
        if list(arr.shape) != t["shape"]:
            raise FormatError(f"tensor {t['name']} has shape {t['shape']}, model expects {list(arr.shape)}")
        n = arr.size
        if pos + n > section.values.size:
            raise FormatError("checkpoint payload shorter than its manifest")
        arr[...] = section.values[pos : pos + n].reshape(arr.shape)
        pos += n
    if pos != section.values.size:
        raise FormatError("checkpoint payload longer than its manifest")
    ns = mm.get("norm_stats")
    model.norm_stats = None if ns is None else NormStats(ns["mean"], ns["std"])
    return model


def save_checkpoint(model: DenoiserModel, path) -> Path:
    c = RecordingContainer([], {"kind": "checkpoint"}, 0.0, checkpoint_section(model))
    return write_container(c, path)


def load_checkpoint(path, dtype=np.float32) -> DenoiserModel:
    c = read_container(path)
    if c.model is None:
        raise FormatError(f"{path} holds no model section")
    return model_from_section(c.model, dtype)
