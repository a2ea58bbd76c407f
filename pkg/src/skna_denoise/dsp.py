"""Signal conditioning: zero-phase filters, rational resampling, windowing
and train-set z-scoring.

Amplitudes are in microvolts throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from scipy import signal as sps

from .errors import DegenerateDataError, EmptySegmentationError, InvalidBandError

BASELINE = "baseline"
STIMULATION = "stimulation"
CONDITIONS = (BASELINE, STIMULATION)
LABEL_CODE = {BASELINE: 0, STIMULATION: 1}

BANDPASS_ORDER = 4
NOTCH_Q = 35.0


class Period(NamedTuple):
    start: int
    end: int
    condition: str


@dataclass
class SampledSignal:
    samples: np.ndarray
    fs: float
    periods: list = field(default_factory=list)
    units: str = "uV"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.fs > 0:
            raise ValueError(f"fs must be positive, got {self.fs}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")
        self.periods = [Period(int(s), int(e), str(c)) for s, e, c in self.periods]
        prev_end = 0
        for p in self.periods:
            if p.condition not in CONDITIONS:
                raise ValueError(f"unknown condition {p.condition!r}")
            if not (prev_end <= p.start < p.end <= len(self.samples)):
                raise ValueError(f"period {p} overlaps, is unsorted or out of bounds")
            prev_end = p.end

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    def with_samples(self, samples) -> "SampledSignal":
        return replace(self, samples=samples)

    def condition_mask(self, condition: str) -> np.ndarray:
        mask = np.zeros(len(self.samples), dtype=bool)
        for p in self.periods:
            if p.condition == condition:
                mask[p.start : p.end] = True
        return mask


@dataclass
class SegmentSet:
    """Fixed-length windows with per-window bookkeeping.

    ``starts`` are sample offsets into the source signal, ``period_ids`` index
    the source signal's period list and ``seg_index`` is the position of the
    window inside its period (0, 1, ...).
    """

    segments: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    starts: np.ndarray
    period_ids: np.ndarray
    seg_index: np.ndarray
    overlap: float
    fs: float

    def __post_init__(self):
        self.segments = np.atleast_2d(np.asarray(self.segments, dtype=np.float64))
        n = self.segments.shape[0]
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.subjects = np.asarray(self.subjects, dtype=str)
        self.starts = np.asarray(self.starts, dtype=np.int64)
        self.period_ids = np.asarray(self.period_ids, dtype=np.int64)
        self.seg_index = np.asarray(self.seg_index, dtype=np.int64)
        for name in ("labels", "subjects", "starts", "period_ids", "seg_index"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self):
        return self.segments.shape[0]

    @property
    def window_len(self) -> int:
        return self.segments.shape[1]

    def take(self, idx) -> "SegmentSet":
        idx = np.asarray(idx)
        return SegmentSet(
            self.segments[idx], self.labels[idx], self.subjects[idx], self.starts[idx],
            self.period_ids[idx], self.seg_index[idx], self.overlap, self.fs,
        )

    def with_segments(self, segments) -> "SegmentSet":
        segments = np.asarray(segments, dtype=np.float64)
        if segments.shape[0] != len(self):
            raise ValueError("replacement segments must keep the segment count")
        return replace(self, segments=segments)

    def for_subject(self, subject) -> "SegmentSet":
        return self.take(np.flatnonzero(self.subjects == subject))

    @staticmethod
    def concat(sets: Sequence["SegmentSet"]) -> "SegmentSet":
        sets = list(sets)
        if not sets:
            raise EmptySegmentationError("nothing to concatenate")
        ov = {s.overlap for s in sets}
        fs = {s.fs for s in sets}
        if len(ov) != 1 or len(fs) != 1:
            raise ValueError("cannot concatenate segment sets with different overlap or fs")
        return SegmentSet(
            np.concatenate([s.segments for s in sets]),
            np.concatenate([s.labels for s in sets]),
            np.concatenate([s.subjects for s in sets]),
            np.concatenate([s.starts for s in sets]),
            np.concatenate([s.period_ids for s in sets]),
            np.concatenate([s.seg_index for s in sets]),
            sets[0].overlap,
            sets[0].fs,
        )


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and self.std > 0):
            raise DegenerateDataError(f"invalid normalisation stats mean={self.mean} std={self.std}")


# ---------------------------------------------------------------------------
# filters


def _zero_phase_sos(sig: SampledSignal, sos: np.ndarray, order: int) -> SampledSignal:
    x = sig.samples
    padlen = min(3 * order, max(len(x) - 1, 0))
    if len(x) == 0:
        return sig.with_samples(x.copy())
    y = sps.sosfiltfilt(sos, x, padtype="odd", padlen=padlen)
    return sig.with_samples(y)


def bandpass_filter(sig: SampledSignal, lo: float = 500.0, hi: float = 1000.0,
                    order: int = BANDPASS_ORDER) -> SampledSignal:
    """Butterworth band-pass applied forward and backward."""
    if not (0 < lo < hi < sig.fs / 2):
        raise InvalidBandError(f"band {lo}-{hi} Hz invalid for fs={sig.fs} Hz")
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=sig.fs, output="sos")
    return _zero_phase_sos(sig, sos, 2 * order)


def notch_filter(sig: SampledSignal, f0: float = 762.0, q: float = NOTCH_Q) -> SampledSignal:
    """Second-order IIR notch applied forward and backward."""
    if not (0 < f0 < sig.fs / 2):
        raise InvalidBandError(f"notch {f0} Hz invalid for fs={sig.fs} Hz")
    if not q > 0:
        raise InvalidBandError(f"notch quality factor must be positive, got {q}")
    b, a = sps.iirnotch(f0, q, fs=sig.fs)
    return _zero_phase_sos(sig, sps.tf2sos(b, a), 2)


def bandpass_response(fs: float, freqs, lo=500.0, hi=1000.0, order=BANDPASS_ORDER):
    """Magnitude of the forward-backward band-pass at ``freqs`` (Hz)."""
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    _, h = sps.sosfreqz(sos, worN=np.atleast_1d(freqs), fs=fs)
    return np.abs(h) ** 2


def notch_response(fs: float, freqs, f0=762.0, q=NOTCH_Q):
    b, a = sps.iirnotch(f0, q, fs=fs)
    _, h = sps.freqz(b, a, worN=np.atleast_1d(freqs), fs=fs)
    return np.abs(h) ** 2


# ---------------------------------------------------------------------------
# resampling


def _rate_ratio(fs_in: float, fs_out: float) -> Fraction:
    return (Fraction(fs_out).limit_denominator(10**6) / Fraction(fs_in).limit_denominator(10**6))


RESAMPLE_HALF_LEN = 64  # filter half-length in units of max(up, down)


def _polyphase_lowpass(up: int, down: int, beta: float = 5.0) -> np.ndarray:
    # long enough that the roll-off sits above 1000 Hz at a 2048 Hz output rate
    max_rate = max(up, down)
    h = sps.firwin(2 * RESAMPLE_HALF_LEN * max_rate + 1, 1.0 / max_rate, window=("kaiser", beta))
    # unit DC gain on every polyphase branch, so constants survive exactly
    for r in range(up):
        h[r::up] /= h[r::up].sum() * up
    return h


def resample(sig: SampledSignal, fs_out: float) -> SampledSignal:
    """Rational polyphase resampling with a Kaiser-windowed anti-alias filter."""
    if not fs_out > 0:
        raise ValueError(f"fs_out must be positive, got {fs_out}")
    ratio = _rate_ratio(sig.fs, fs_out)
    n_out = int(round(len(sig) * float(ratio)))
    if ratio == 1:
        return sig.with_samples(sig.samples.copy())
    up, down = ratio.numerator, ratio.denominator
    y = sps.resample_poly(sig.samples, up, down, window=_polyphase_lowpass(up, down))
    y = y[:n_out]
    if len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    periods = []
    for p in sig.periods:
        s = min(int(round(p.start * float(ratio))), n_out)
        e = min(int(round(p.end * float(ratio))), n_out)
        if e > s:
            periods.append(Period(s, e, p.condition))
    return SampledSignal(y, float(fs_out), periods, sig.units)


def preprocess(sig: SampledSignal, fs_out: float = 2048.0, band=(500.0, 1000.0),
               notch_hz: float = 762.0) -> SampledSignal:
    """Band-pass, then notch, then resample."""
    out = bandpass_filter(sig, *band)
    out = notch_filter(out, notch_hz)
    return resample(out, fs_out)


# ---------------------------------------------------------------------------
# segmentation and normalisation


def segment(sig: SampledSignal, window_s: float = 1.0, overlap: float = 0.0,
            subject: str = "") -> SegmentSet:
    """Tile each labelled period with windows; windows never cross a boundary."""
    win_f = window_s * sig.fs
    win = int(round(win_f))
    if win <= 0 or abs(win - win_f) > 1e-9 * max(1.0, win_f):
        raise ValueError(f"window of {window_s} s is not a whole number of samples at {sig.fs} Hz")
    if overlap not in (0.0, 0.5):
        raise ValueError(f"overlap must be 0.0 or 0.5, got {overlap}")
    hop = win if overlap == 0.0 else win // 2
    if overlap == 0.5 and win % 2:
        raise ValueError("half-overlap needs an even window length")
    rows, labels, starts, pids, idx = [], [], [], [], []
    for pid, p in enumerate(sig.periods):
        n = (p.end - p.start - win) // hop + 1 if p.end - p.start >= win else 0
        for k in range(n):
            s = p.start + k * hop
            rows.append(sig.samples[s : s + win])
            labels.append(LABEL_CODE[p.condition])
            starts.append(s)
            pids.append(pid)
            idx.append(k)
    if not rows:
        raise EmptySegmentationError(f"no labelled period holds a {window_s} s window")
    return SegmentSet(np.stack(rows), labels, [subject] * len(rows), starts, pids, idx,
                      float(overlap), float(sig.fs))


def normalize_fit(train: SegmentSet) -> NormStats:
    if len(train) == 0:
        raise DegenerateDataError("empty training set")
    x = train.segments
    mean = float(x.mean())
    std = float(x.std())
    if not std > 0:
        raise DegenerateDataError("training samples have zero variance")
    return NormStats(mean, std)


def normalize_apply(seg: SegmentSet, stats: NormStats) -> SegmentSet:
    return seg.with_segments((seg.segments - stats.mean) / stats.std)


def denormalize(seg: SegmentSet, stats: NormStats) -> SegmentSet:
    return seg.with_segments(seg.segments * stats.std + stats.mean)
