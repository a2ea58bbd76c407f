"""Seeded stand-ins for the clean SKNA recordings and the EMG noise corpus.

The SKNA model is an in-band (500-1000 Hz) Gaussian carrier whose envelope is
a constant floor plus Poisson-timed Gaussian bursts.  The EMG model is a
motor-unit spike train (fixed biphasic action-potential shape per unit) on a
pink background, gated by square-wave activation epochs.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .container import Record, RecordingContainer
from .dsp import BASELINE, STIMULATION, Period, SampledSignal
from .errors import InsufficientSubjectsError

GENERATOR_VERSION = 1

FULL_PERIODS = ((BASELINE, 120.0), (STIMULATION, 300.0), (BASELINE, 120.0), (STIMULATION, 300.0))
DESK_PERIODS = ((BASELINE, 20.0), (STIMULATION, 50.0), (BASELINE, 20.0), (STIMULATION, 50.0))


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    baseline_burst_rate: float  # bursts/min
    stim_burst_rate: float      # bursts/min
    burst_amp_mean: float       # uV
    burst_dur_mean: float       # s
    noise_floor_amp: float      # uV
    seed: int

    def __post_init__(self):
        if not self.stim_burst_rate > self.baseline_burst_rate:
            raise ValueError("stimulation burst rate must exceed the baseline rate")
        for name in ("baseline_burst_rate", "burst_amp_mean", "burst_dur_mean", "noise_floor_amp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ProtocolSpec:
    periods: tuple = FULL_PERIODS
    fs: float = 10_000.0

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple((str(c), float(d)) for c, d in self.periods))
        if not self.fs > 0:
            raise ValueError("fs must be positive")
        for cond, dur in self.periods:
            if cond not in (BASELINE, STIMULATION) or not dur > 0:
                raise ValueError(f"bad protocol period ({cond!r}, {dur})")

    @property
    def total_s(self) -> float:
        return sum(d for _, d in self.periods)

    @property
    def n_samples(self) -> int:
        return sum(int(round(d * self.fs)) for _, d in self.periods)


def derive_seed(master_seed: int, key: str) -> int:
    """Stable per-key seed from a master seed."""
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(key.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def band_noise(n: int, fs: float, lo: float, hi: float, rng) -> np.ndarray:
    """Unit-variance Gaussian noise restricted to [lo, hi] Hz."""
    X = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    X[(f < lo) | (f > hi)] = 0.0
    y = np.fft.irfft(X, n)
    return y / y.std()


def pink_noise(n: int, fs: float, rng) -> np.ndarray:
    X = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    X /= np.sqrt(np.maximum(f, 1.0))
    y = np.fft.irfft(X, n)
    return y / y.std()


# uniform per-subject draws for default profiles
PROFILE_RANGES = {
    "baseline_burst_rate": (1.0, 3.0),
    "stim_burst_rate": (20.0, 40.0),
    "burst_amp_mean": (3.0, 6.0),
    "burst_dur_mean": (0.5, 1.5),
    "noise_floor_amp": (0.8, 1.5),
}


def random_profile(subject_id: str, seed: int) -> SubjectProfile:
    rng = np.random.default_rng(seed)
    draws = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in PROFILE_RANGES.items()}
    return SubjectProfile(subject_id=subject_id, seed=int(seed), **draws)


def _period_table(protocol: ProtocolSpec) -> list:
    periods, pos = [], 0
    for cond, dur in protocol.periods:
        n = int(round(dur * protocol.fs))
        periods.append(Period(pos, pos + n, cond))
        pos += n
    return periods


def gen_skna(profile: SubjectProfile, protocol: ProtocolSpec = ProtocolSpec()) -> SampledSignal:
    fs = protocol.fs
    periods = _period_table(protocol)
    n = periods[-1].end
    rng = np.random.default_rng(profile.seed)
    carrier = band_noise(n, fs, 500.0, 1000.0, rng)
    env = np.full(n, profile.noise_floor_amp)
    for p in periods:
        rate = profile.baseline_burst_rate if p.condition == BASELINE else profile.stim_burst_rate
        t0, t1 = p.start / fs, p.end / fs
        t = t0 + rng.exponential(60.0 / rate)
        while t < t1:
            amp = profile.burst_amp_mean * rng.uniform(0.6, 1.4)
            sigma = profile.burst_dur_mean * rng.uniform(0.6, 1.4) / 3.0
            i0 = max(0, int((t - 4 * sigma) * fs))
            i1 = min(n, int((t + 4 * sigma) * fs) + 1)
            tt = np.arange(i0, i1) / fs
            env[i0:i1] += amp * np.exp(-0.5 * ((tt - t) / sigma) ** 2)
            t += rng.exponential(60.0 / rate)
    x = (env * carrier).astype(np.float32).astype(np.float64)
    return SampledSignal(x, fs, periods)


def _muap(fs: float, width_s: float) -> np.ndarray:
    w = width_s * fs
    half = int(np.ceil(5 * w))
    tt = np.arange(-half, half + 1) / w
    shape = -tt * np.exp(-0.5 * tt**2)
    return shape / np.abs(shape).max()


def activation_gate(n: int, fs: float, rng, floor: float = 0.1) -> np.ndarray:
    """Square-wave gate: active epochs of 2-10 s, rests of 3-15 s (~40% duty)."""
    gate = np.full(n, floor)
    t, dur = 0.0, n / fs
    active = rng.random() < 0.4
    while t < dur:
        length = rng.uniform(2.0, 10.0) if active else rng.uniform(3.0, 15.0)
        if active:
            gate[int(t * fs) : int(min(dur, t + length) * fs)] = 1.0
        t += length
        active = not active
    return gate


def gen_emg(duration_s: float, fs: float = 4000.0, seed: int = 0, n_units: int = 8,
            background: float = 0.3, scale_uv: float = 20.0, muap_width_s=(0.2e-3, 0.6e-3)) -> SampledSignal:
    """Gated motor-unit spike trains plus pink background."""
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    gate = activation_gate(n, fs, rng)
    spikes = np.zeros(n)
    for _ in range(n_units):
        rate = rng.uniform(8.0, 20.0)
        amp = rng.lognormal(0.0, 0.6) * rng.choice([-1.0, 1.0])
        shape = _muap(fs, rng.uniform(*muap_width_s))
        times = np.cumsum(rng.exponential(1.0 / rate, size=int(rate * duration_s * 1.5) + 10))
        idx = (times[times < duration_s] * fs).astype(np.int64)
        train = np.zeros(n)
        np.add.at(train, idx, amp * rng.lognormal(0.0, 0.2, size=idx.size))
        spikes += np.convolve(train, shape, mode="same")
    spikes /= spikes.std()
    x = scale_uv * gate * (spikes + background * pink_noise(n, fs, rng))
    x = x.astype(np.float32).astype(np.float64)
    return SampledSignal(x, fs, [])


def gen_dataset(n_subjects: int = 12, profiles=None, seed: int = 0,
                protocol: ProtocolSpec = ProtocolSpec(), emg_duration_s: float = 414.0,
                emg_fs: float = 4000.0) -> RecordingContainer:
    """Clean SKNA for ``n_subjects`` subjects plus as many independent EMG records."""
    if n_subjects < 2:
        raise InsufficientSubjectsError("leave-one-subject-out needs at least 2 subjects")
    if profiles is not None and len(profiles) != n_subjects:
        raise ValueError("need one profile per subject")
    records, prof_meta, emg_meta = [], [], []
    for i in range(n_subjects):
        sid = f"S{i + 1:02d}"
        prof = profiles[i] if profiles is not None else random_profile(sid, derive_seed(seed, sid))
        records.append(Record(prof.subject_id, "skna", gen_skna(prof, protocol)))
        prof_meta.append(asdict(prof))
    for i in range(n_subjects):
        mid = f"M{i + 1:02d}"
        s = derive_seed(seed, mid)
        records.append(Record(mid, "emg", gen_emg(emg_duration_s, emg_fs, s)))
        emg_meta.append({"subject_id": mid, "seed": s, "duration_s": emg_duration_s, "fs": emg_fs})
    manifest = {
        "generator": "skna_denoise.synth",
        "generator_version": GENERATOR_VERSION,
        "master_seed": int(seed),
        "protocol": {"periods": [list(p) for p in protocol.periods], "fs": protocol.fs},
        "profiles": prof_meta,
        "emg": emg_meta,
    }
    return RecordingContainer(records, manifest, protocol.fs)
