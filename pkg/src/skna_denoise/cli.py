"""Command-line entry point (``skna-denoise``)."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .container import Record, RecordingContainer, read_container, write_container
from .dsp import SegmentSet, normalize_apply, normalize_fit, preprocess
from .errors import ConfigError, FormatError, NonFiniteError, SknaError

log = logging.getLogger("skna_denoise")

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT, EXIT_PARTIAL = 0, 2, 3, 4


def save_segments(path, s: SegmentSet) -> Path:
    path = Path(path)
    np.savez(path, segments=s.segments, labels=s.labels, subjects=s.subjects, starts=s.starts,
             period_ids=s.period_ids, seg_index=s.seg_index, overlap=s.overlap, fs=s.fs)
    return path


def load_segments(path) -> SegmentSet:
    try:
        with np.load(path, allow_pickle=False) as z:
            return SegmentSet(z["segments"], z["labels"], z["subjects"], z["starts"], z["period_ids"],
                              z["seg_index"], float(z["overlap"]), float(z["fs"]))
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a segment file ({exc})") from None


def _load_config(args):
    from .experiment import ExperimentConfig

    cfg = ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["master_seed"] = args.seed
    if getattr(args, "snr", None):
        over["snr_db"] = args.snr
    if getattr(args, "out", None):
        over["out_dir"] = str(args.out)
    if getattr(args, "jobs", None):
        over["jobs"] = args.jobs
    if getattr(args, "epochs", None):
        over["epochs"] = args.epochs
    if getattr(args, "subjects", None):
        subj = args.subjects
        if subj.isdigit():
            over["n_subjects"] = int(subj)
        else:
            over["test_subjects"] = [s for s in subj.split(",") if s]
    d = {**cfg.__dict__, **over}
    return ExperimentConfig.from_dict(d)


# -- subcommands -------------------------------------------------------------------


def cmd_synth(args):
    from .experiment import load_dataset

    cfg = _load_config(args)
    c = load_dataset(cfg) if not cfg.dataset else None
    path = write_container(c, args.out)
    print(f"wrote {len(c.records)} records to {path}")


def cmd_preprocess(args):
    cfg = _load_config(args)
    src = read_container(args.input)
    recs = [Record(r.subject_id, r.role, preprocess(r.signal, cfg.fs, tuple(cfg.band), cfg.notch_hz))
            for r in src.records]
    manifest = {**src.manifest, "preprocess": {"fs": cfg.fs, "band": cfg.band, "notch_hz": cfg.notch_hz}}
    write_container(RecordingContainer(recs, manifest, cfg.fs), args.out)
    print(f"wrote {len(recs)} preprocessed records to {args.out}")


def cmd_mix(args):
    from .dsp import segment
    from .mixing import mix_dataset

    cfg = _load_config(args)
    c = read_container(args.input)
    skna = {r.subject_id: r.signal for r in c.by_role("skna")}
    test = (cfg.test_subjects or sorted(skna))[0]
    if test not in skna:
        raise ConfigError(f"unknown subject {test}")
    train = SegmentSet.concat([segment(skna[s], 1.0, 0.0, s) for s in sorted(skna) if s != test])
    res = mix_dataset(train, segment(skna[test], 1.0, 0.5, test), c, cfg.master_seed, cfg.snr_db[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train_noisy", "train_clean", "test_noisy", "test_clean"):
        save_segments(out / f"{name}.npz", getattr(res, name))
    (out / "plan.json").write_text(res.plan.to_json())
    print(f"held out {test}; noise subject {res.plan.test_noise_subject}; gain {res.plan.global_gain:.4g}")


def cmd_train(args):
    from .denoiser import TrainConfig, build_model, save_checkpoint, train

    cfg = _load_config(args)
    d = Path(args.input)
    noisy, clean = load_segments(d / "train_noisy.npz"), load_segments(d / "train_clean.npz")
    stats = normalize_fit(noisy)
    model = build_model(cfg.master_seed)
    model.norm_stats = stats
    rep = train(model, normalize_apply(noisy, stats), normalize_apply(clean, stats),
                TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, cfg.master_seed),
                progress=lambda e, l: log.info("epoch %d loss %.5f", e, l))
    save_checkpoint(model, args.out)
    print(f"trained {len(rep.epoch_loss)} epochs, final loss {rep.epoch_loss[-1]:.5f}; wrote {args.out}")


def cmd_denoise(args):
    from .denoiser import denoise_segments, load_checkpoint, overlap_add

    model = load_checkpoint(args.model)
    if model.norm_stats is None:
        raise FormatError("checkpoint carries no normalisation statistics")
    src = Path(args.input)
    noisy = load_segments(src / "test_noisy.npz" if src.is_dir() else src)
    out = denoise_segments(model, normalize_apply(noisy, model.norm_stats))
    recs = []
    for s in sorted(set(noisy.subjects)):
        recs.append(Record(s, "skna", overlap_add(out.for_subject(s), norm_stats=model.norm_stats)))
    write_container(RecordingContainer(recs, {"signal_type": "recon"}, noisy.fs), args.out)
    print(f"denoised {len(noisy)} windows for {len(recs)} subject(s); wrote {args.out}")


def cmd_features(args):
    from .features import FeatureTable, IntegratorConfig, signal_features

    cfg = _load_config(args)
    c = read_container(args.input)
    stype = args.signal_type or c.manifest.get("signal_type", "clean")
    tabs = [signal_features(r.signal, r.subject_id, stype, IntegratorConfig(cfg.tau), cfg.feature_window_s)[0]
            for r in c.by_role("skna")]
    tab = FeatureTable.concat(tabs)
    tab.to_csv(args.out)
    print(f"wrote {len(tab)} feature rows to {args.out}")


def _read_feature_csvs(paths):
    from .features import FeatureTable

    return FeatureTable.concat([FeatureTable.from_csv(Path(p)) for p in paths])


def cmd_stats(args):
    from .experiment import feature_statistics
    from .features import FEATURES

    tab = _read_feature_csvs(args.input)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "signal_type", "kw_h", "kw_p", "kw_stars", "wilcoxon_p", "wilcoxon_stars",
                    "fisher_ratio", "auroc"])
        for feat in FEATURES:
            for t in sorted(set(tab.signal_type)):
                st = feature_statistics(tab, feat, t)
                kw, wx = st.get("kw"), st.get("wilcoxon")
                w.writerow([feat, t, kw and f"{kw.statistic:.6g}", kw and f"{kw.p_value:.6g}", kw and kw.stars,
                            wx and f"{wx.p_value:.6g}", wx and wx.stars, f"{st.get('fisher', np.nan):.6g}",
                            f"{st.get('auroc', np.nan):.6g}"])
    print(f"wrote statistics to {args.out}")


def cmd_classify(args):
    from .classify import ClassifierSpec, FoldMetrics, evaluate_fold, standardize_features, train_classifier
    from .experiment import ExperimentConfig
    from .synth import derive_seed

    cfg = _load_config(args) if args.config else ExperimentConfig(master_seed=args.seed or 0)
    tab = _read_feature_csvs(args.input)
    subjects = sorted(set(tab.subject))
    if len(subjects) < 2:
        raise ConfigError("leave-one-subject-out classification needs at least two subjects")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "signal_type", "classifier", *FoldMetrics.METRICS])
        for t in sorted(set(tab.signal_type)):
            tt = tab.select(signal_type=t)
            if cfg.classify_unit == "period":
                tt = tt.period_means()
            for s in subjects:
                tr = tt.take(np.flatnonzero(tt.subject != s))
                te = tt.select(subject=s)
                if not len(te):
                    continue
                Xtr, Xte, _ = standardize_features(tr.values, te.values)
                for kind in cfg.classifiers:
                    spec = ClassifierSpec(kind, seed=derive_seed(cfg.master_seed, f"{s}/{t}/{kind}"),
                                          n_trees=cfg.n_trees)
                    m = evaluate_fold(train_classifier(spec, Xtr, tr.labels()), Xte, te.labels())
                    w.writerow([s, t, kind] + [f"{v:.6g}" for v in m.as_dict().values()])
    print(f"wrote LOSO classification to {args.out}")


def cmd_loso(args):
    from .experiment import emit_report, run_loso

    cfg = _load_config(args)
    report = run_loso(cfg)
    emit_report(report, cfg.out_dir, figures=not args.no_figures)
    print(f"report written to {cfg.out_dir} (config hash {report.config_hash}, {report.wall_time_s:.0f} s)")
    if report.partial:
        print("one or more folds aborted; report is partial", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args):
    from .experiment import emit_report, load_report

    report = load_report(args.input)
    emit_report(report, args.out or args.input)
    print(f"re-emitted report to {args.out or args.input}")
    return EXIT_PARTIAL if report.partial else EXIT_OK


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skna-denoise", description="SKNA denoising toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, inputs=None, out_required=True):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        if inputs == "one":
            sp.add_argument("input")
        elif inputs == "many":
            sp.add_argument("input", nargs="+")
        sp.add_argument("--config", help="YAML/JSON experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        return sp

    s = add("synth", cmd_synth, "generate a synthetic dataset container")
    s.add_argument("--subjects", help="number of subjects")
    add("preprocess", cmd_preprocess, "band-pass, notch and resample every record", "one")
    s = add("mix", cmd_mix, "contaminate clean windows for one held-out subject", "one")
    s.add_argument("--snr", type=float, nargs="+")
    s.add_argument("--subjects", help="held-out subject id")
    s = add("train", cmd_train, "train the denoiser on a mix directory", "one")
    s.add_argument("--epochs", type=int)
    s = add("denoise", cmd_denoise, "denoise held-out windows with a checkpoint", "one")
    s.add_argument("--model", required=True)
    s = add("features", cmd_features, "iSKNA burst features for every record", "one")
    s.add_argument("--signal-type", choices=("bpf", "recon", "clean"))
    add("stats", cmd_stats, "statistics over feature CSVs", "many")
    add("classify", cmd_classify, "LOSO classification over feature CSVs", "many")
    s = add("loso", cmd_loso, "full leave-one-subject-out experiment", out_required=False)
    s.add_argument("--snr", type=float, nargs="+")
    s.add_argument("--subjects", help="count (synthetic) or comma-separated held-out ids")
    s.add_argument("--jobs", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--no-figures", action="store_true")
    add("report", cmd_report, "re-emit tables and figures from a saved report", "one", out_required=False)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except (FormatError, SknaError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
