"""Contamination protocol: subject-exclusive noise, random pairing,
time-shift augmentation of baseline windows and one global noise gain.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .container import RecordingContainer
from .dsp import LABEL_CODE, BASELINE, STIMULATION, SampledSignal, SegmentSet
from .errors import DegenerateDataError, InsufficientSubjectsError, InvalidOffsetError

AUG_SHIFT_MARGIN_S = 0.25


class InfiniteSNRError(DegenerateDataError):
    pass


def measure_snr(clean, noise) -> float:
    """10*log10(sum clean^2 / sum noise^2) in dB."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"shape mismatch {clean.shape} vs {noise.shape}")
    pn = float(np.sum(noise * noise))
    if pn == 0.0:
        raise InfiniteSNRError("noise has zero power")
    pc = float(np.sum(clean * clean))
    if pc == 0.0:
        return -np.inf
    return 10.0 * np.log10(pc / pn)


def _pool(x) -> np.ndarray:
    return x.segments if isinstance(x, SegmentSet) else np.asarray(x, dtype=np.float64)


def global_gain_for_target(clean_pool, noise_pool, target_db: float) -> float:
    c, n = _pool(clean_pool), _pool(noise_pool)
    if c.size == 0 or n.size == 0:
        raise DegenerateDataError("empty pool")
    if c.ndim == 2 and n.ndim == 2 and c.shape[1] != n.shape[1]:
        raise ValueError("clean and noise windows differ in length")
    pc = float(np.sum(c * c))
    pn = float(np.sum(n * n))
    if pc == 0.0 or pn == 0.0:
        raise DegenerateDataError("zero-power pool")
    return float(np.sqrt(pc / pn) * 10.0 ** (-target_db / 20.0))


def time_shift(noise: SampledSignal, offset_s: float) -> SampledSignal:
    """Circular shift by round(offset_s * fs) samples."""
    if not (0.0 < offset_s < noise.duration):
        raise InvalidOffsetError(f"offset {offset_s} s outside (0, {noise.duration}) s")
    k = int(round(offset_s * noise.fs))
    return SampledSignal(np.roll(noise.samples, k), noise.fs, [], noise.units)


@dataclass
class MixPlan:
    target_snr_db: float
    seed: int
    test_noise_subject: str
    train_noise_subjects: list
    shifts: dict                      # noise subject -> circular shift (samples)
    train_pairing: list               # per train window: [noise subject, offset]
    augmentation_pairs: list          # [clean window index, noise subject, offset] on shifted records
    test_pairing: list                # per test window: [noise subject, offset]
    global_gain: float
    window_len: int

    def __post_init__(self):
        if self.test_noise_subject in self.train_noise_subjects:
            raise ValueError("test noise subject also feeds training")
        if not self.global_gain > 0:
            raise ValueError("global gain must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MixPlan":
        return cls(**json.loads(text))


@dataclass
class MixResult:
    train_noisy: SegmentSet
    train_clean: SegmentSet   # row-aligned targets, augmented rows reuse their clean window
    test_noisy: SegmentSet
    test_clean: SegmentSet
    plan: MixPlan
    train_noise: np.ndarray = field(repr=False)  # unscaled noise slices, row-aligned
    test_noise: np.ndarray = field(repr=False)

    @property
    def n_augmented(self) -> int:
        return len(self.plan.augmentation_pairs)


class _SlotDrawer:
    """Window offsets into one record: aligned slots without replacement until
    exhausted, then uniform offsets with replacement."""

    def __init__(self, n: int, win: int, rng):
        self.n, self.win, self.rng = n, win, rng
        self.slots = list(rng.permutation(n // win) * win)

    def draw(self) -> int:
        if self.slots:
            return int(self.slots.pop())
        return int(self.rng.integers(0, self.n - self.win + 1))


def _slice(rec: np.ndarray, offset: int, win: int) -> np.ndarray:
    if offset + win <= rec.size:
        return rec[offset : offset + win]
    return np.take(rec, np.arange(offset, offset + win), mode="wrap")


def noise_records(source) -> dict:
    if isinstance(source, RecordingContainer):
        return {r.subject_id: r.signal for r in source.by_role("emg")}
    return dict(source)


def mix_dataset(train_clean: SegmentSet, test_clean: SegmentSet, noise, plan_seed: int,
                target_db: float) -> MixResult:
    """Contaminate training and test windows at one pooled target SNR.

    ``noise`` maps noise-subject id to a preprocessed record sampled at the
    windows' rate (or is a container holding ``emg`` records).
    """
    recs = noise_records(noise)
    ids = sorted(recs)
    if len(ids) < 2:
        raise InsufficientSubjectsError("need at least two noise subjects")
    win = train_clean.window_len
    if test_clean.window_len != win:
        raise ValueError("train and test windows differ in length")
    for sid in ids:
        if recs[sid].fs != train_clean.fs:
            raise ValueError(f"noise record {sid} sampled at {recs[sid].fs} Hz, windows at {train_clean.fs} Hz")
        if len(recs[sid]) < win:
            raise ValueError(f"noise record {sid} shorter than one window")
    rng = np.random.default_rng(plan_seed)
    test_sid = ids[int(rng.integers(len(ids)))]
    train_ids = [s for s in ids if s != test_sid]

    shifts, shifted = {}, {}
    for sid in train_ids:
        rec = recs[sid]
        off_s = rng.uniform(AUG_SHIFT_MARGIN_S, rec.duration - AUG_SHIFT_MARGIN_S)
        sh = time_shift(rec, off_s)
        shifts[sid] = int(round(off_s * rec.fs))
        shifted[sid] = sh.samples

    drawers = {sid: _SlotDrawer(len(recs[sid]), win, rng) for sid in train_ids}
    train_pairing, train_noise = [], []
    for _ in range(len(train_clean)):
        sid = train_ids[int(rng.integers(len(train_ids)))]
        off = drawers[sid].draw()
        train_pairing.append([sid, off])
        train_noise.append(recs[sid].samples[off : off + win])

    labels = train_clean.labels
    base_idx = np.flatnonzero(labels == LABEL_CODE[BASELINE])
    n_extra = int((labels == LABEL_CODE[STIMULATION]).sum() - base_idx.size)
    aug_pairs, aug_noise, aug_rows = [], [], []
    if n_extra > 0 and base_idx.size:
        shifted_drawers = {sid: _SlotDrawer(len(recs[sid]), win, rng) for sid in train_ids}
        order = np.concatenate([rng.permutation(base_idx) for _ in range(n_extra // base_idx.size + 1)])
        for ci in order[:n_extra]:
            sid = train_ids[int(rng.integers(len(train_ids)))]
            off = shifted_drawers[sid].draw()
            aug_pairs.append([int(ci), sid, off])
            aug_noise.append(shifted[sid][off : off + win])
            aug_rows.append(int(ci))

    test_rec = recs[test_sid].samples
    test_pairing, test_noise = [], []
    pid_base = {}
    for k in range(len(test_clean)):
        key = (test_clean.subjects[k], int(test_clean.period_ids[k]))
        if key not in pid_base:
            mask = (test_clean.subjects == key[0]) & (test_clean.period_ids == key[1])
            first = int(test_clean.starts[mask].min())
            span = int(test_clean.starts[mask].max()) + win - first
            hi = test_rec.size - span + 1 if span <= test_rec.size else test_rec.size
            pid_base[key] = (first, int(rng.integers(0, hi)))
        first, base = pid_base[key]
        off = (base + int(test_clean.starts[k]) - first) % test_rec.size
        test_pairing.append([test_sid, off])
        test_noise.append(_slice(test_rec, off, win))

    targets = train_clean.take(np.concatenate([np.arange(len(train_clean)), np.asarray(aug_rows, dtype=np.int64)]))
    tr_noise = np.asarray(train_noise + aug_noise, dtype=np.float64).reshape(-1, win)
    te_noise = np.asarray(test_noise, dtype=np.float64).reshape(-1, win)
    gain = global_gain_for_target(
        np.concatenate([targets.segments, test_clean.segments]),
        np.concatenate([tr_noise, te_noise]),
        target_db,
    )
    plan = MixPlan(float(target_db), int(plan_seed), test_sid, train_ids, shifts, train_pairing,
                   aug_pairs, test_pairing, gain, int(win))
    return MixResult(
        train_noisy=targets.with_segments(targets.segments + gain * tr_noise),
        train_clean=targets,
        test_noisy=test_clean.with_segments(test_clean.segments + gain * te_noise),
        test_clean=test_clean,
        plan=plan,
        train_noise=tr_noise,
        test_noise=te_noise,
    )


def replay_noise(plan: MixPlan, noise) -> tuple:
    """Unscaled (train, test) noise slices reconstructed from a plan."""
    recs = noise_records(noise)
    win = plan.window_len
    shifted = {sid: np.roll(recs[sid].samples, k) for sid, k in plan.shifts.items()}
    train = [recs[sid].samples[off : off + win] for sid, off in plan.train_pairing]
    train += [shifted[sid][off : off + win] for _, sid, off in plan.augmentation_pairs]
    test = [_slice(recs[sid].samples, off, win) for sid, off in plan.test_pairing]
    return (np.asarray(train, dtype=np.float64).reshape(-1, win),
            np.asarray(test, dtype=np.float64).reshape(-1, win))
