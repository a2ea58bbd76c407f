import numpy as np
import pytest
from scipy.signal import periodogram

from skna_denoise.container import to_bytes
from skna_denoise.dsp import BASELINE, STIMULATION, bandpass_filter
from skna_denoise.errors import InsufficientSubjectsError
from skna_denoise.synth import (FULL_PERIODS, PROFILE_RANGES, ProtocolSpec, SubjectProfile, derive_seed, gen_dataset, gen_emg,
                                gen_skna, random_profile)

SHORT = ProtocolSpec(((BASELINE, 10.0), (STIMULATION, 10.0)), 2048.0)


def oracle_burst_rates(sig, smooth_s=0.1):
    """Upward threshold crossings per minute of the rectified, boxcar-smoothed trace.

    Threshold is mean + 3 std of the smoothed trace over baseline samples.
    """
    w = int(smooth_s * sig.fs)
    sm = np.convolve(np.abs(sig.samples), np.ones(w) / w, mode="same")
    thr = sm[sig.condition_mask(BASELINE)].mean() + 3 * sm[sig.condition_mask(BASELINE)].std()
    counts = {BASELINE: 0, STIMULATION: 0}
    minutes = {BASELINE: 0.0, STIMULATION: 0.0}
    for p in sig.periods:
        seg = sm[p.start : p.end] > thr
        counts[p.condition] += int(np.sum(seg[1:] & ~seg[:-1]) + seg[0])
        minutes[p.condition] += (p.end - p.start) / sig.fs / 60.0
    return counts[BASELINE] / minutes[BASELINE], counts[STIMULATION] / minutes[STIMULATION]


class TestProfiles:
    def test_invariants(self):
        with pytest.raises(ValueError):
            SubjectProfile("a", 10.0, 5.0, 1.0, 1.0, 1.0, 0)
        with pytest.raises(ValueError):
            SubjectProfile("a", 1.0, 5.0, 0.0, 1.0, 1.0, 0)

    def test_random_profile_ranges(self):
        for s in range(50):
            p = random_profile("S", s)
            for name, (lo, hi) in PROFILE_RANGES.items():
                assert lo <= getattr(p, name) <= hi
            assert 1 <= p.baseline_burst_rate <= 3 and 20 <= p.stim_burst_rate <= 40

    def test_default_protocol(self):
        p = ProtocolSpec()
        assert p.periods == FULL_PERIODS and p.total_s == 840.0

    def test_derive_seed_stable_and_distinct(self):
        assert derive_seed(0, "S01") == derive_seed(0, "S01")
        assert len({derive_seed(0, f"S{i}") for i in range(100)}) == 100
        assert derive_seed(0, "S01") != derive_seed(1, "S01")


class TestSkna:
    def test_length_full_protocol(self):
        x = gen_skna(random_profile("S01", 1), ProtocolSpec(fs=2048.0))
        assert len(x) == 1_720_320
        assert [p.condition for p in x.periods] == [BASELINE, STIMULATION, BASELINE, STIMULATION]

    def test_deterministic(self):
        p = random_profile("S01", 5)
        a, b = gen_skna(p, SHORT), gen_skna(p, SHORT)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_energy_in_band(self):
        x = gen_skna(random_profile("S01", 3), ProtocolSpec(((BASELINE, 20.0), (STIMULATION, 20.0)), 10_000.0))
        y = bandpass_filter(x)
        assert np.sum(y.samples**2) >= 0.8 * np.sum(x.samples**2)

    def test_stim_oracle_rate_exceeds_baseline_over_seeds(self):
        proto = ProtocolSpec(fs=2048.0)
        for seed in range(20):
            b, s = oracle_burst_rates(gen_skna(random_profile("S", derive_seed(seed, "S")), proto))
            assert s > b, (seed, b, s)


class TestEmg:
    def test_length(self):
        assert len(gen_emg(414.0, 4000.0, seed=1)) == 1_656_000

    def test_deterministic(self):
        assert gen_emg(5.0, seed=3).samples.tobytes() == gen_emg(5.0, seed=3).samples.tobytes()
        assert gen_emg(5.0, seed=3).samples.tobytes() != gen_emg(5.0, seed=4).samples.tobytes()

    def test_invalid_duration(self):
        with pytest.raises(ValueError):
            gen_emg(0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_spectrum_broadband(self, seed):
        e = gen_emg(30.0, 4000.0, seed)
        f, P = periodogram(e.samples, fs=4000.0)
        total = P.sum()
        assert P[(f >= 500) & (f <= 1000)].sum() >= 0.05 * total
        bins = [P[(f >= lo) & (f < lo + 50)].sum() for lo in range(0, 2000, 50)]
        assert max(bins) <= 0.30 * total
        assert all(b > 0 for b in bins)


class TestDataset:
    def test_counts_and_manifest(self):
        c = gen_dataset(3, seed=2, protocol=SHORT, emg_duration_s=5.0)
        assert len(c.by_role("skna")) == 3 and len(c.by_role("emg")) == 3
        assert [p["subject_id"] for p in c.manifest["profiles"]] == ["S01", "S02", "S03"]
        assert c.manifest["master_seed"] == 2

    def test_twelve(self):
        c = gen_dataset(12, seed=0, protocol=ProtocolSpec(((BASELINE, 1.0), (STIMULATION, 1.0)), 2048.0),
                        emg_duration_s=1.0)
        assert len(c.by_role("skna")) == 12 and len(c.by_role("emg")) == 12

    def test_one_subject_rejected(self):
        with pytest.raises(InsufficientSubjectsError):
            gen_dataset(1)

    def test_deterministic(self):
        kw = dict(seed=9, protocol=SHORT, emg_duration_s=3.0)
        assert to_bytes(gen_dataset(2, **kw)) == to_bytes(gen_dataset(2, **kw))

    def test_supplied_profiles(self):
        profs = [random_profile("A", 1), random_profile("B", 2)]
        c = gen_dataset(2, profiles=profs, protocol=SHORT, emg_duration_s=2.0)
        assert c.subject_ids() == ["A", "B"]
        with pytest.raises(ValueError):
            gen_dataset(3, profiles=profs)
