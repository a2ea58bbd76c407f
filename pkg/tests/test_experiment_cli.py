import dataclasses
import json
import logging

import numpy as np
import pytest

from skna_denoise import cli
from skna_denoise.classify import KINDS
from skna_denoise.dsp import SegmentSet
from skna_denoise.errors import ConfigError
from skna_denoise.experiment import (ExperimentConfig, TABLES, emit_report, load_report, prepare, report_tables,
                                     run_denoise_fold, run_loso)
from skna_denoise.features import SIGNAL_TYPES
from skna_denoise.mixing import MixPlan
from skna_denoise.stats import stars

TINY = dict(master_seed=7, n_subjects=3, epochs=1, n_trees=5, snr_db=[-4.0],
            protocol=[["baseline", 20], ["stimulation", 20], ["baseline", 20], ["stimulation", 20]])


def tiny(**kw):
    return ExperimentConfig(**{**TINY, **kw})


@pytest.fixture(scope="module")
def prep():
    return prepare(tiny())


@pytest.fixture(scope="module")
def report(prep):
    return run_loso(tiny(), prep=prep)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.snr_db == [-4.0, -8.0] and cfg.master_seed == 0

    @pytest.mark.parametrize("bad", [dict(snr_db=[]), dict(master_seed=None), dict(n_subjects=1),
                                     dict(classifiers=["knn"]), dict(protocol="lab"), dict(batch_size=1),
                                     dict(classify_unit="minute")])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 3})

    def test_yaml_exponent_strings_coerced(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("lr: 1e-3\ntau: '0.2'\nepochs: '3'\n")
        cfg = ExperimentConfig.from_file(p)
        assert (cfg.lr, cfg.tau, cfg.epochs) == (1e-3, 0.2, 3)
        with pytest.raises(ConfigError):
            ExperimentConfig(lr="fast")

    def test_hash_ignores_runtime_keys(self):
        assert tiny().hash() == tiny(jobs=3, out_dir="elsewhere").hash()
        assert tiny().hash() != tiny(master_seed=8).hash()

    def test_yaml_file(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("master_seed: 5\nsnr_db: [-8]\nepochs: 2\n")
        cfg = ExperimentConfig.from_file(p)
        assert (cfg.master_seed, cfg.snr_db, cfg.epochs) == (5, [-8.0], 2)


class TestLoso:
    def test_each_subject_tested_once_per_snr(self, report):
        assert len(report.folds) == 3 and len(report.clean_folds) == 3
        assert sorted(f.subject for f in report.folds) == ["S01", "S02", "S03"]
        assert not report.partial

    def test_feature_tables_cover_all_signal_types(self, report):
        tab = report.features(-4.0)
        assert {(s, t) for s, t in zip(tab.subject, tab.signal_type)} == \
            {(s, t) for s in ("S01", "S02", "S03") for t in SIGNAL_TYPES}

    def test_classification_per_signal_type_and_kind(self, report):
        cls = report.classification(-4.0)
        assert set(cls) == {(t, k) for t in SIGNAL_TYPES for k in KINDS}
        assert all(len(v) == 3 for v in cls.values())

    def test_noise_exclusivity(self, report):
        test_noise = set()
        for f in report.folds:
            plan = MixPlan.from_json(f.plan_json)
            used = {sid for sid, _ in plan.train_pairing} | {sid for _, sid, _ in plan.augmentation_pairs}
            assert plan.test_noise_subject not in used
            assert {sid for sid, _ in plan.test_pairing} == {plan.test_noise_subject}
            test_noise.add(plan.test_noise_subject)
        assert test_noise

    def test_fold_isolation(self, prep):
        # flipping the held-out subject's sign keeps every pooled power (and so the gain) bitwise equal;
        # nothing fitted on the training side may move
        cfg = tiny(save_checkpoints=True)
        flipped = dataclasses.replace(prep, test_segs={**prep.test_segs})
        s = prep.test_segs["S02"]
        flipped.test_segs["S02"] = s.with_segments(-s.segments)
        a = run_denoise_fold(prep, cfg, -4.0, "S02")
        b = run_denoise_fold(flipped, cfg, -4.0, "S02")
        pa, pb = json.loads(a.plan_json), json.loads(b.plan_json)
        assert pa == pb
        assert a.loss == b.loss
        assert a.checkpoint.manifest == b.checkpoint.manifest
        assert np.array_equal(a.checkpoint.values, b.checkpoint.values)

    def test_csvs_reproducible(self, report, prep):
        again = run_loso(tiny(), prep=prep)
        assert report_tables(again) == report_tables(report)

    def test_csvs_independent_of_jobs(self, report, prep):
        par = run_loso(tiny(jobs=2), prep=prep)
        assert report_tables(par) == report_tables(report)

    def test_tables_carry_hash_and_seed(self, report):
        for name, text in report_tables(report).items():
            assert text.startswith(f"# config_hash={report.config_hash} master_seed=7\n"), name

    def test_period_unit_classification(self, prep):
        from skna_denoise.experiment import run_clean_fold

        res = run_clean_fold(prep, tiny(classify_unit="period"), "S01")
        m = res.classification[("clean", "random_forest")]
        assert list(m.labels) == [0, 1, 0, 1]

    def test_unknown_test_subject(self, prep):
        with pytest.raises(ConfigError):
            run_loso(tiny(test_subjects=["S09"]), prep=prep)

    def test_subset_of_subjects(self, prep):
        r = run_loso(tiny(test_subjects=["S03"]), prep=prep)
        assert [f.subject for f in r.folds] == ["S03"]


def battery_table(shift, n_subj=6, per=5, seed=0):
    from skna_denoise.features import FEATURES, FeatureTable

    r = np.random.default_rng(seed)
    rows = []
    for i in range(n_subj):
        for t in SIGNAL_TYPES:
            for c, cond in enumerate(("baseline", "stimulation")):
                for w in range(per):
                    v = r.standard_normal(len(FEATURES)) + shift * c * (t != "bpf")
                    rows.append((f"S{i}", t, cond, w + c * per, v))
    s, t, c, w, v = zip(*rows)
    return FeatureTable(list(s), list(t), list(c), list(w), np.array(v))


class TestFeatureBattery:
    def test_six_groups_and_contrasts(self):
        from skna_denoise.experiment import feature_battery
        from skna_denoise.stats import kruskal_wallis, wilcoxon_signed_rank

        tab = battery_table(3.0)
        out = feature_battery(tab, "burst_count")
        groups = [tab.select(signal_type=t, condition=c).column("burst_count")
                  for t in SIGNAL_TYPES for c in ("baseline", "stimulation")]
        assert out["omnibus"].statistic == pytest.approx(kruskal_wallis(groups).statistic, abs=1e-12)
        keys = {k for k in out if k != "omnibus"}
        assert keys == {((t, "baseline"), (t, "stimulation")) for t in SIGNAL_TYPES} | \
            {(("clean", c), (t, c)) for c in ("baseline", "stimulation") for t in ("bpf", "recon")}

        def means(t, c):
            g = tab.select(signal_type=t, condition=c)
            return np.array([g.select(subject=f"S{i}").column("burst_count").mean() for i in range(6)])

        ref = wilcoxon_signed_rank(means("recon", "stimulation"), means("recon", "baseline"))
        assert out[(("recon", "baseline"), ("recon", "stimulation"))].p_value == pytest.approx(ref.p_value)
        assert ref.p_value == pytest.approx(2 / 64)

    def test_gate_blocks_post_hoc(self):
        from skna_denoise.experiment import feature_battery, feature_statistics

        tab = battery_table(0.0, seed=3)
        out = feature_battery(tab, "mean_iskna")
        assert out["omnibus"].p_value >= 0.05
        assert list(out) == ["omnibus"]
        assert feature_statistics(tab, "mean_iskna", "recon")["wilcoxon"] is None


class TestEmitReport:
    def test_files(self, report, tmp_path):
        written = {p.name for p in emit_report(report, tmp_path)}
        assert set(TABLES) <= written
        assert {"mixplans.jsonl", "report.json", "report.pkl"} <= written
        for stem in ("iskna", "grid", "boxplots", "roc", "bars"):
            assert f"fig_{stem}_-4dB.svg" in written
        meta = json.loads((tmp_path / "report.json").read_text())
        assert meta["config_hash"] == report.config_hash and meta["partial"] is False
        assert report_tables(load_report(tmp_path)) == report_tables(report)

    def test_roc_has_nine_curves(self, report):
        import matplotlib.pyplot as plt

        from skna_denoise.figures import roc_figure

        fig = roc_figure(report, -4.0)
        labelled = [ln for ln in fig.axes[0].get_lines() if not ln.get_label().startswith("_")]
        plt.close(fig)
        assert len(labelled) == 9

    def test_star_for_p_0_004(self):
        assert stars(0.004) == "**"

    def test_empty_feature_table_skips_boxplot(self, report, tmp_path, caplog):
        gutted = dataclasses.replace(report, folds=[dataclasses.replace(f, status="aborted", message="x")
                                                    for f in report.folds])
        with caplog.at_level(logging.WARNING):
            written = {p.name for p in emit_report(gutted, tmp_path)}
        assert not any(n.startswith("fig_boxplots") for n in written)
        assert "boxplot figure skipped" in caplog.text
        assert json.loads((tmp_path / "report.json").read_text())["partial"] is True

    def test_unwritable_outdir(self, report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            emit_report(report, blocker / "sub", figures=False)


@pytest.fixture
def tiny_yaml(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


class TestCli:
    def test_loso_end_to_end(self, tiny_yaml, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["loso", "--config", str(tiny_yaml), "--out", str(a), "--no-figures"]) == 0
        assert cli.main(["loso", "--config", str(tiny_yaml), "--out", str(b), "--no-figures", "--jobs", "2"]) == 0
        for name in TABLES:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        assert cli.main(["report", str(a), "--out", str(tmp_path / "c")]) == 0
        assert (tmp_path / "c" / "fig_roc_-4dB.svg").exists()

    def test_stagewise_pipeline(self, tiny_yaml, tmp_path):
        d = tmp_path
        cfg = ["--config", str(tiny_yaml)]
        assert cli.main(["synth", *cfg, "--out", str(d / "raw.skna")]) == 0
        assert cli.main(["preprocess", str(d / "raw.skna"), *cfg, "--out", str(d / "pre.skna")]) == 0
        assert cli.main(["mix", str(d / "pre.skna"), *cfg, "--subjects", "S02", "--out", str(d / "mix")]) == 0
        assert cli.main(["train", str(d / "mix"), *cfg, "--out", str(d / "model.skna")]) == 0
        assert cli.main(["denoise", str(d / "mix"), "--model", str(d / "model.skna"),
                         "--out", str(d / "recon.skna")]) == 0
        assert cli.main(["features", str(d / "pre.skna"), *cfg, "--out", str(d / "clean.csv")]) == 0
        assert cli.main(["stats", str(d / "clean.csv"), "--out", str(d / "stats.csv")]) == 0
        assert cli.main(["classify", str(d / "clean.csv"), *cfg, "--out", str(d / "cls.csv")]) == 0
        lines = (d / "cls.csv").read_text().splitlines()
        assert len(lines) == 1 + 3 * len(KINDS)
        assert "burst_count" in (d / "stats.csv").read_text()

    def test_config_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("master_seed: 1\nsnr_db: []\n")
        assert cli.main(["loso", "--config", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err
        assert cli.main(["loso", "--config", str(tmp_path / "missing.yaml")]) == 2

    def test_bad_container_exit_3(self, tmp_path, capsys):
        junk = tmp_path / "junk.skna"
        junk.write_bytes(b"NOPE" + bytes(60))
        assert cli.main(["preprocess", str(junk), "--out", str(tmp_path / "o.skna")]) == 3
        assert "offset 0" in capsys.readouterr().err

    def test_truncated_container_exit_3(self, tiny_yaml, tmp_path, capsys):
        p = tmp_path / "raw.skna"
        assert cli.main(["synth", "--config", str(tiny_yaml), "--out", str(p)]) == 0
        data = p.read_bytes()
        p.write_bytes(data[: len(data) // 2])
        assert cli.main(["features", str(p), "--out", str(tmp_path / "f.csv")]) == 3
        assert "data error" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_fold_exit_4(self, tmp_path, capsys):
        cfg = tmp_path / "boom.json"
        cfg.write_text(json.dumps({**TINY, "lr": 1e30, "test_subjects": ["S01"]}))
        out = tmp_path / "out"
        assert cli.main(["loso", "--config", str(cfg), "--out", str(out), "--no-figures"]) == 4
        assert "partial" in capsys.readouterr().err
        meta = json.loads((out / "report.json").read_text())
        assert meta["partial"] is True and meta["aborted_folds"][0][1] == "S01"

    def test_segments_round_trip(self, prep, tmp_path):
        s = prep.train_segs["S01"]
        back = cli.load_segments(cli.save_segments(tmp_path / "s.npz", s))
        assert isinstance(back, SegmentSet)
        assert np.array_equal(back.segments, s.segments) and np.array_equal(back.labels, s.labels)
        assert list(back.subjects) == list(s.subjects)

    def test_console_script_help(self):
        import subprocess
        import sys

        r = subprocess.run([sys.executable, "-m", "skna_denoise.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0
        for sub in ("synth", "preprocess", "mix", "train", "denoise", "features", "stats", "classify", "loso",
                    "report"):
            assert sub in r.stdout
