import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skna_denoise.dsp import BASELINE, STIMULATION, Period, SampledSignal
from skna_denoise.errors import DegenerateDataError
from skna_denoise.features import (CSV_HEADER, FEATURES, BurstThreshold, FeatureTable, IntegratorConfig, askna,
                                   burst_threshold, extract_features, iskna, signal_features)
from skna_denoise.synth import DESK_PERIODS, ProtocolSpec, gen_skna, random_profile

FS = 2048.0


def trace(x, fs=FS, cond=BASELINE):
    x = np.asarray(x, dtype=float)
    return SampledSignal(x, fs, [Period(0, x.size, cond)])


def brute_features(x, thr, fs, window_s):
    """Reference implementation: explicit sample loop per window."""
    L = int(round(window_s * fs))
    rows = []
    for w in range(x.size // L):
        seg = x[w * L : (w + 1) * L]
        runs, cur = [], []
        for v in seg:
            if v > thr:
                cur.append(v)
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        n_supra = sum(len(r) for r in runs)
        rows.append([
            len(runs) * 60.0 / window_s,
            100.0 * n_supra / L,
            np.mean([max(r) for r in runs]) if runs else 0.0,
            sum(sum(v - thr for v in r) for r in runs) / fs / 60.0,
            seg.mean(),
            seg.std(),
        ])
    return np.array(rows)


class TestIskna:
    def test_zero(self):
        assert not iskna(trace(np.zeros(100))).samples.any()

    def test_step_response(self):
        c = 3.0
        y = iskna(trace(np.full(4096, -c))).samples
        n_tau = int(0.1 * FS)
        assert y[n_tau - 1] == pytest.approx(c * (1 - np.exp(-1)), rel=0.01)
        assert y[-1] == pytest.approx(c, rel=1e-6)

    def test_impulse_decay(self):
        x = np.zeros(50)
        x[0] = 1.0
        y = iskna(trace(x)).samples
        a = IntegratorConfig(0.1).decay(FS)
        assert y[0] == pytest.approx(1 - a)
        assert np.allclose(y[1:] / y[:-1], a)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**16), k=st.floats(0.01, 100.0))
    def test_bounded_nonnegative_and_scale_equivariant(self, seed, k):
        x = np.random.default_rng(seed).standard_normal(3000) * 5
        y = iskna(trace(x)).samples
        assert y.min() >= 0 and y.max() <= np.abs(x).max() + 1e-12
        assert np.allclose(iskna(trace(k * x)).samples, k * y, rtol=1e-12, atol=0)

    def test_invalid_tau(self):
        with pytest.raises(ValueError):
            IntegratorConfig(0.0)


class TestAskna:
    def test_constant(self):
        assert np.allclose(askna(trace(np.full(30_000, 1.7))).samples, 1.7)

    def test_kernel_length(self):
        x = np.zeros(30_000)
        x[15_000] = 1.0
        y = askna(trace(x)).samples
        assert np.count_nonzero(y) == 10_240
        assert np.allclose(y[y > 0], 1 / 10_240)

    def test_linear(self, rng):
        a, b = rng.standard_normal(25_000), rng.standard_normal(25_000)
        lhs = askna(trace(a + b)).samples
        assert np.max(np.abs(lhs - askna(trace(a)).samples - askna(trace(b)).samples)) < 1e-9

    def test_edges_shrink(self):
        x = np.arange(20_000.0)
        y = askna(trace(x)).samples
        assert y[0] == pytest.approx(np.mean(x[: 10_240 - 5120]))

    def test_empty(self):
        with pytest.raises(DegenerateDataError):
            askna(SampledSignal(np.zeros(0), FS, []))


class TestThreshold:
    def test_examples(self):
        assert burst_threshold(np.full(10, 2.0)).value == 2.0
        t = burst_threshold([0.5, 1.5, 0.5, 1.5], "S01", "bpf")
        assert (t.value, t.source_mean, t.source_std) == (2.5, 1.0, 0.5)
        assert (t.subject, t.signal_type) == ("S01", "bpf")

    def test_order_invariant(self, rng):
        v = rng.standard_normal(1000)
        assert burst_threshold(v).value == pytest.approx(burst_threshold(rng.permutation(v)).value, abs=1e-12)

    def test_empty(self):
        with pytest.raises(DegenerateDataError):
            burst_threshold([])


class TestExtract:
    thr = BurstThreshold(5.0, 5.0, 0.0, "S", "clean")

    def test_below_threshold(self):
        tab = extract_features(trace(np.full(int(10 * FS), 4.0)), self.thr)
        assert len(tab) == 1
        assert np.allclose(tab.values[0], [0, 0, 0, 0, 4.0, 0.0])

    def test_full_window_rectangle(self):
        tab = extract_features(trace(np.full(int(10 * FS), 11.0)), self.thr)
        assert np.allclose(tab.values[0, :4], [6.0, 100.0, 11.0, 1.0])

    def test_three_bursts(self):
        x = np.zeros(int(10 * FS))
        for s in (1.0, 4.0, 7.5):
            x[int(s * FS) : int((s + 0.5) * FS)] = 9.0
        tab = extract_features(trace(x), self.thr)
        assert np.allclose(tab.values[0, :4], [18.0, 15.0, 9.0, 0.1])
        assert np.allclose(tab.values, brute_features(x, 5.0, FS, 10.0))

    def test_adjacent_runs_counted_separately(self):
        x = np.zeros(int(10 * FS))
        x[100:200] = 6.0
        x[201:300] = 6.0
        assert extract_features(trace(x), self.thr).column("burst_count")[0] == 12.0

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_matches_brute_force(self, seed):
        r = np.random.default_rng(seed)
        fs = 64.0
        x = np.abs(np.cumsum(r.standard_normal(int(35 * fs))))
        thr = float(np.quantile(x, 0.6))
        tab = extract_features(trace(x, fs), BurstThreshold(thr, thr, 0.0), 10.0)
        assert len(tab) == 3
        assert np.allclose(tab.values, brute_features(x, thr, fs, 10.0), rtol=1e-10, atol=1e-12)

    def test_windows_per_period_and_tail_dropped(self):
        n0, n1 = int(25 * FS), int(31 * FS)
        x = SampledSignal(np.zeros(n0 + n1), FS, [Period(0, n0, BASELINE), Period(n0, n0 + n1, STIMULATION)])
        tab = extract_features(x, self.thr)
        assert list(tab.condition) == [BASELINE] * 2 + [STIMULATION] * 3
        assert list(tab.window_index) == list(range(5))

    def test_scale_equivariance(self, rng):
        x = trace(rng.standard_normal(int(20 * FS)) * 3)
        t1, th1, _ = signal_features(x, "S", "bpf")
        t2, th2, _ = signal_features(x.with_samples(x.samples * 2.5), "S", "bpf")
        assert th2.value == pytest.approx(2.5 * th1.value)
        for f in ("burst_count", "burst_duration"):
            assert np.array_equal(t1.column(f), t2.column(f))
        for f in ("burst_amplitude", "burst_total_area", "mean_iskna", "std_iskna"):
            assert np.allclose(t2.column(f), 2.5 * t1.column(f))

    def test_no_complete_window_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            tab = extract_features(trace(np.zeros(100)), self.thr)
        assert len(tab) == 0 and "empty" in caplog.text

    def test_ranges(self, rng):
        x = trace(np.abs(rng.standard_normal(int(30 * FS))))
        tab, _, _ = signal_features(x, "S", "clean")
        d = tab.column("burst_duration")
        assert np.all((d >= 0) & (d <= 100))
        assert np.all(tab.values >= 0)

    def test_clean_synthetic_separates_conditions(self):
        for seed in range(5):
            sig = gen_skna(random_profile("S", seed), ProtocolSpec(DESK_PERIODS, 2048.0))
            tab, _, _ = signal_features(sig, "S", "clean")
            b = tab.select(condition=BASELINE).column("burst_count").mean()
            s = tab.select(condition=STIMULATION).column("burst_count").mean()
            assert s > b


class TestTable:
    def test_csv_round_trip(self, rng):
        tab = FeatureTable(["S01", "S02"], ["bpf", "recon"], [BASELINE, STIMULATION], [0, 1],
                           rng.random((2, len(FEATURES))))
        text = tab.to_csv()
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        back = FeatureTable.from_csv(text)
        assert list(back.subject) == ["S01", "S02"]
        assert np.allclose(back.values, tab.values, rtol=1e-9)

    def test_select_and_concat(self):
        a = FeatureTable(["A"], ["bpf"], [BASELINE], [0], np.ones((1, 6)))
        b = FeatureTable(["B"], ["clean"], [STIMULATION], [0], np.zeros((1, 6)))
        both = FeatureTable.concat([a, FeatureTable.empty(), b])
        assert len(both) == 2 and len(both.select(signal_type="clean")) == 1
        assert list(both.labels()) == [0, 1]
        assert len(FeatureTable.concat([])) == 0

    def test_ragged_columns(self):
        with pytest.raises(ValueError):
            FeatureTable(["A", "B"], ["bpf"], [BASELINE], [0], np.ones((1, 6)))

    def test_period_means(self):
        # B B S S S B S for one subject/type, plus a second subject with a single period
        conds = [BASELINE] * 2 + [STIMULATION] * 3 + [BASELINE, STIMULATION]
        vals = np.arange(7 * 6, dtype=float).reshape(7, 6)
        a = FeatureTable(["A"] * 7, ["clean"] * 7, conds, np.arange(7), vals)
        b = FeatureTable(["B"], ["clean"], [BASELINE], [0], np.full((1, 6), 9.0))
        pm = FeatureTable.concat([b, a]).period_means()
        assert list(pm.subject) == ["A"] * 4 + ["B"]
        assert list(pm.condition) == [BASELINE, STIMULATION, BASELINE, STIMULATION, BASELINE]
        assert list(pm.window_index) == [0, 1, 2, 3, 0]
        assert np.allclose(pm.values[0], vals[:2].mean(axis=0))
        assert np.allclose(pm.values[1], vals[2:5].mean(axis=0))
        assert np.allclose(pm.values[4], 9.0)

    def test_period_means_ignores_row_order(self, rng):
        conds = [BASELINE] * 3 + [STIMULATION] * 3
        tab = FeatureTable(["A"] * 6, ["bpf"] * 6, conds, np.arange(6), rng.random((6, 6)))
        perm = rng.permutation(6)
        assert np.array_equal(tab.take(perm).period_means().values, tab.period_means().values)
        assert len(FeatureTable.empty().period_means()) == 0
