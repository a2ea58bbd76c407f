"""iSKNA / aSKNA traces and per-window burst features."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .dsp import BASELINE, CONDITIONS, LABEL_CODE, SampledSignal
from .errors import DegenerateDataError

log = logging.getLogger(__name__)

FEATURES = ("burst_count", "burst_duration", "burst_amplitude", "burst_total_area", "mean_iskna", "std_iskna")
KEY_COLUMNS = ("subject", "signal_type", "condition", "window_index")
CSV_HEADER = KEY_COLUMNS + FEATURES
SIGNAL_TYPES = ("bpf", "recon", "clean")


@dataclass(frozen=True)
class IntegratorConfig:
    tau: float = 0.1

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def decay(self, fs: float) -> float:
        return float(np.exp(-1.0 / (fs * self.tau)))


def iskna(sig: SampledSignal, cfg: IntegratorConfig = IntegratorConfig()) -> SampledSignal:
    """Leaky integral of |x|: y[n] = a*y[n-1] + (1-a)*|x[n]|, y[-1] = 0."""
    x = np.ascontiguousarray(sig.samples, dtype=np.float64)
    return sig.with_samples(kernels.leaky_integrate(x, cfg.decay(sig.fs)))


def askna(iskna_sig: SampledSignal, window_s: float = 5.0) -> SampledSignal:
    """Centred moving average; the window shrinks at the edges."""
    w = int(round(window_s * iskna_sig.fs))
    x = np.asarray(iskna_sig.samples, dtype=np.float64)
    if w < 1 or x.size == 0:
        raise DegenerateDataError(f"moving-average window of {w} samples over {x.size} samples")
    left = w // 2
    right = w - 1 - left
    n = np.arange(x.size)
    lo = np.maximum(n - left, 0)
    hi = np.minimum(n + right + 1, x.size)
    c = np.concatenate([[0.0], np.cumsum(x)])
    return iskna_sig.with_samples((c[hi] - c[lo]) / (hi - lo))


@dataclass(frozen=True)
class BurstThreshold:
    value: float
    source_mean: float
    source_std: float
    subject: str = ""
    signal_type: str = ""


def burst_threshold(baseline_values, subject: str = "", signal_type: str = "") -> BurstThreshold:
    v = np.asarray(baseline_values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DegenerateDataError("no baseline iSKNA samples to derive a threshold from")
    m = float(v.mean())
    s = float(v.std())
    return BurstThreshold(m + 3.0 * s, m, s, subject, signal_type)


def signal_threshold(iskna_sig: SampledSignal, subject: str = "", signal_type: str = "") -> BurstThreshold:
    """Threshold from all baseline periods of one trace, pooled."""
    return burst_threshold(iskna_sig.samples[iskna_sig.condition_mask(BASELINE)], subject, signal_type)


@dataclass
class FeatureTable:
    subject: np.ndarray
    signal_type: np.ndarray
    condition: np.ndarray
    window_index: np.ndarray
    values: np.ndarray  # (n, len(FEATURES))

    def __post_init__(self):
        self.subject = np.asarray(self.subject, dtype=object)
        self.signal_type = np.asarray(self.signal_type, dtype=object)
        self.condition = np.asarray(self.condition, dtype=object)
        self.window_index = np.asarray(self.window_index, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, len(FEATURES))
        n = self.values.shape[0]
        if not all(a.shape == (n,) for a in (self.subject, self.signal_type, self.condition, self.window_index)):
            raise ValueError("feature-table columns differ in length")

    def __len__(self):
        return self.values.shape[0]

    @classmethod
    def empty(cls) -> "FeatureTable":
        return cls([], [], [], [], np.zeros((0, len(FEATURES))))

    @staticmethod
    def concat(tables) -> "FeatureTable":
        tables = [t for t in tables if len(t)]
        if not tables:
            return FeatureTable.empty()
        return FeatureTable(*(np.concatenate([getattr(t, f) for t in tables])
                              for f in ("subject", "signal_type", "condition", "window_index", "values")))

    def take(self, idx) -> "FeatureTable":
        return FeatureTable(self.subject[idx], self.signal_type[idx], self.condition[idx],
                            self.window_index[idx], self.values[idx])

    def select(self, subject=None, signal_type=None, condition=None) -> "FeatureTable":
        m = np.ones(len(self), dtype=bool)
        for col, want in ((self.subject, subject), (self.signal_type, signal_type), (self.condition, condition)):
            if want is not None:
                m &= np.isin(col, np.atleast_1d(np.asarray(want, dtype=object)))
        return self.take(np.flatnonzero(m))

    def column(self, name: str) -> np.ndarray:
        return self.values[:, FEATURES.index(name)]

    def labels(self) -> np.ndarray:
        return np.array([LABEL_CODE[c] for c in self.condition], dtype=np.int64)

    def period_means(self) -> "FeatureTable":
        """One row per period: the mean over each run of consecutive same-condition windows."""
        rows, vals = [], []
        for subj, stype in sorted(set(zip(self.subject, self.signal_type))):
            idx = np.flatnonzero((self.subject == subj) & (self.signal_type == stype))
            idx = idx[np.argsort(self.window_index[idx], kind="stable")]
            start, ordinal = 0, 0
            for k in range(1, idx.size + 1):
                if k == idx.size or self.condition[idx[k]] != self.condition[idx[start]]:
                    rows.append((subj, stype, self.condition[idx[start]], ordinal))
                    vals.append(self.values[idx[start:k]].mean(axis=0))
                    start, ordinal = k, ordinal + 1
        if not rows:
            return FeatureTable.empty()
        s, t, c, w = zip(*rows)
        return FeatureTable(list(s), list(t), list(c), list(w), np.array(vals))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(self)):
            w.writerow([self.subject[i], self.signal_type[i], self.condition[i], int(self.window_index[i])]
                       + [f"{v:.10g}" for v in self.values[i]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "FeatureTable":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError("not a feature-table CSV")
        body = rows[1:]
        return cls([r[0] for r in body], [r[1] for r in body], [r[2] for r in body], [int(r[3]) for r in body],
                   np.array([[float(v) for v in r[4:]] for r in body]).reshape(-1, len(FEATURES)))


def extract_features(iskna_sig: SampledSignal, thr: BurstThreshold, window_s: float = 10.0,
                     subject: str | None = None, signal_type: str | None = None) -> FeatureTable:
    """Six burst features per non-overlapping window inside each labelled period."""
    fs = iskna_sig.fs
    L = int(round(window_s * fs))
    subject = thr.subject if subject is None else subject
    signal_type = thr.signal_type if signal_type is None else signal_type
    x = np.asarray(iskna_sig.samples, dtype=np.float64)
    blocks, conds = [], []
    for p in iskna_sig.periods:
        k = (p.end - p.start) // L
        if k:
            blocks.append(x[p.start : p.start + k * L].reshape(k, L))
            conds += [p.condition] * k
    if not blocks:
        log.warning("no complete %.1f-s window for subject %s (%s); feature table is empty",
                    window_s, subject, signal_type)
        return FeatureTable.empty()
    win = np.ascontiguousarray(np.concatenate(blocks))
    st = kernels.burst_window_stats(win, float(thr.value))
    n_runs, n_supra, peak_sum, excess = st.T
    vals = np.column_stack([
        n_runs * (60.0 / window_s),
        100.0 * n_supra / L,
        np.where(n_runs > 0, peak_sum / np.maximum(n_runs, 1), 0.0),
        excess / fs / 60.0,
        win.mean(axis=1),
        win.std(axis=1),
    ])
    n = len(conds)
    return FeatureTable([subject] * n, [signal_type] * n, conds, np.arange(n), vals)


def signal_features(sig: SampledSignal, subject: str, signal_type: str,
                    cfg: IntegratorConfig = IntegratorConfig(), window_s: float = 10.0):
    """iSKNA, its baseline threshold and the feature table for one trace."""
    isig = iskna(sig, cfg)
    thr = signal_threshold(isig, subject, signal_type)
    return extract_features(isig, thr, window_s), thr, isig


__all__ = ["FEATURES", "CSV_HEADER", "SIGNAL_TYPES", "CONDITIONS", "IntegratorConfig", "iskna", "askna",
           "BurstThreshold", "burst_threshold", "signal_threshold", "FeatureTable", "extract_features",
           "signal_features"]
