"""Leave-one-subject-out experiment driver and report emission."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import pickle
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .classify import KINDS, ClassifierSpec, FoldMetrics, evaluate_fold, roc_points, standardize_features, \
    train_classifier
from .container import RecordingContainer, read_container
from .denoiser import TrainConfig, build_model, checkpoint_section, denoise_segments, overlap_add, train
from .dsp import CONDITIONS, BASELINE, STIMULATION, SegmentSet, normalize_apply, normalize_fit, preprocess, segment
from .errors import ConfigError, InsufficientSubjectsError, NonFiniteError
from .features import FEATURES, SIGNAL_TYPES, FeatureTable, IntegratorConfig, signal_features
from .mixing import mix_dataset
from .stats import SCOPES, ReconMetrics, auroc, cap_snr, confidence_interval, fishers_ratio, omnibus_then_pairs, \
    recon_metrics
from .synth import DESK_PERIODS, FULL_PERIODS, ProtocolSpec, derive_seed, gen_dataset

log = logging.getLogger(__name__)

PROTOCOLS = {"desk": DESK_PERIODS, "full": FULL_PERIODS}
RUNTIME_KEYS = ("out_dir", "jobs", "save_checkpoints")
CLASSIFY_UNITS = ("window", "period")
FLOAT_KEYS = ("emg_duration_s", "lr", "fs", "notch_hz", "tau", "feature_window_s", "askna_window_s")
INT_KEYS = ("n_subjects", "epochs", "batch_size", "n_trees", "jobs")


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    dataset: str | None = None
    n_subjects: int = 12
    protocol: object = "desk"
    emg_duration_s: float | None = None
    snr_db: list = field(default_factory=lambda: [-4.0, -8.0])
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    fs: float = 2048.0
    band: list = field(default_factory=lambda: [500.0, 1000.0])
    notch_hz: float = 762.0
    tau: float = 0.1
    feature_window_s: float = 10.0
    askna_window_s: float = 5.0
    classifiers: list = field(default_factory=lambda: list(KINDS))
    n_trees: int = 100
    classify_unit: str = "window"
    test_subjects: list | None = None
    out_dir: str = "report"
    jobs: int = 1
    save_checkpoints: bool = False

    def __post_init__(self):
        if not self.snr_db:
            raise ConfigError("at least one SNR target is required")
        # YAML 1.1 reads "1e-3" as a string, so numbers are coerced explicitly
        try:
            self.snr_db = [float(s) for s in self.snr_db]
            for name in FLOAT_KEYS:
                if getattr(self, name) is not None:
                    setattr(self, name, float(getattr(self, name)))
            for name in INT_KEYS:
                setattr(self, name, int(getattr(self, name)))
            self.band = [float(b) for b in self.band]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric config value: {exc}") from None
        if self.master_seed is None:
            raise ConfigError("master_seed is required")
        if self.epochs < 1 or self.batch_size < 2 or self.jobs < 1:
            raise ConfigError("epochs, batch_size and jobs must be positive (batch_size >= 2)")
        if self.dataset is None and self.n_subjects < 2:
            raise ConfigError("need at least two subjects")
        bad = [k for k in self.classifiers if k not in KINDS]
        if bad:
            raise ConfigError(f"unknown classifiers {bad}")
        if self.classify_unit not in CLASSIFY_UNITS:
            raise ConfigError(f"classify_unit must be one of {CLASSIFY_UNITS}")
        if isinstance(self.protocol, str) and self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {sorted(PROTOCOLS)} or a period list")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        import yaml

        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} is not a mapping")
        return cls.from_dict(data)

    def periods(self):
        p = PROTOCOLS[self.protocol] if isinstance(self.protocol, str) else self.protocol
        return tuple((str(c), float(s)) for c, s in p)

    def identity(self) -> dict:
        d = asdict(self)
        for k in RUNTIME_KEYS:
            d.pop(k)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- shared preparation ---------------------------------------------------------


@dataclass
class PreparedData:
    subjects: list
    clean: dict          # subject -> preprocessed SampledSignal
    noise: dict          # noise id -> preprocessed SampledSignal
    train_segs: dict     # subject -> SegmentSet, overlap 0
    test_segs: dict      # subject -> SegmentSet, overlap 0.5
    clean_spans: dict    # subject -> SampledSignal restricted to windowed spans
    clean_features: dict  # subject -> FeatureTable
    manifest: dict


def load_dataset(cfg: ExperimentConfig) -> RecordingContainer:
    if cfg.dataset:
        return read_container(cfg.dataset)
    protocol = ProtocolSpec(cfg.periods())
    emg_s = cfg.emg_duration_s or protocol.total_s
    return gen_dataset(cfg.n_subjects, seed=cfg.master_seed, protocol=protocol, emg_duration_s=emg_s)


def prepare(cfg: ExperimentConfig, container: RecordingContainer | None = None) -> PreparedData:
    container = load_dataset(cfg) if container is None else container
    band = tuple(cfg.band)
    clean = {r.subject_id: preprocess(r.signal, cfg.fs, band, cfg.notch_hz) for r in container.by_role("skna")}
    noise = {r.subject_id: preprocess(r.signal, cfg.fs, band, cfg.notch_hz) for r in container.by_role("emg")}
    subjects = sorted(clean)
    if len(subjects) < 2:
        raise InsufficientSubjectsError("leave-one-subject-out needs at least two subjects")
    integ = IntegratorConfig(cfg.tau)
    train_segs, test_segs, spans, feats = {}, {}, {}, {}
    for s in subjects:
        train_segs[s] = segment(clean[s], 1.0, 0.0, s)
        test_segs[s] = segment(clean[s], 1.0, 0.5, s)
        spans[s] = overlap_add(test_segs[s])
        feats[s] = signal_features(spans[s], s, "clean", integ, cfg.feature_window_s)[0]
    return PreparedData(subjects, clean, noise, train_segs, test_segs, spans, feats, container.manifest)


# -- folds ------------------------------------------------------------------------------


@dataclass
class FoldResult:
    snr_db: float | None
    subject: str
    status: str = "ok"
    message: str = ""
    metrics: dict = field(default_factory=dict)          # signal_type -> ReconMetrics
    features: FeatureTable = field(default_factory=FeatureTable.empty)
    classification: dict = field(default_factory=dict)   # (signal_type, classifier) -> FoldMetrics
    plan_json: str = ""
    loss: list = field(default_factory=list)
    train_seconds: float = 0.0
    signals: dict | None = None                          # example traces for figures
    checkpoint: object = None


def _classify(train_tab: FeatureTable, test_tab: FeatureTable, signal_type: str, cfg, seed) -> dict:
    out = {}
    if cfg.classify_unit == "period":
        train_tab, test_tab = train_tab.period_means(), test_tab.period_means()
    if len(train_tab) == 0 or len(test_tab) == 0:
        return out
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        Xtr, Xte, _ = standardize_features(train_tab.values, test_tab.values)
    for kind in cfg.classifiers:
        spec = ClassifierSpec(kind, seed=derive_seed(seed, f"{signal_type}/{kind}"), n_trees=cfg.n_trees)
        model = train_classifier(spec, Xtr, train_tab.labels())
        out[(signal_type, kind)] = evaluate_fold(model, Xte, test_tab.labels())
    return out


def _fold_seed(cfg, snr, subject) -> int:
    tag = "clean" if snr is None else f"{snr:g}"
    return derive_seed(cfg.master_seed, f"fold/{tag}/{subject}")


def run_clean_fold(prep: PreparedData, cfg: ExperimentConfig, subject: str) -> FoldResult:
    """Classifiers on the uncontaminated signal; independent of the SNR target."""
    others = FeatureTable.concat([prep.clean_features[s] for s in prep.subjects if s != subject])
    res = FoldResult(None, subject)
    res.classification = _classify(others, prep.clean_features[subject], "clean", cfg,
                                   _fold_seed(cfg, None, subject))
    return res


def _subject_signal(segs: SegmentSet, subject: str):
    return overlap_add(segs.for_subject(subject))


def run_denoise_fold(prep: PreparedData, cfg: ExperimentConfig, snr: float, subject: str,
                     keep_signals: bool = False) -> FoldResult:
    """Mix, train, denoise and evaluate one held-out subject at one SNR."""
    seed = _fold_seed(cfg, snr, subject)
    res = FoldResult(snr, subject)
    integ = IntegratorConfig(cfg.tau)
    train_ids = [s for s in prep.subjects if s != subject]
    train_clean = SegmentSet.concat([prep.train_segs[s] for s in train_ids])
    mix = mix_dataset(train_clean, prep.test_segs[subject], prep.noise, seed, snr)
    res.plan_json = mix.plan.to_json()

    stats = normalize_fit(mix.train_noisy)
    model = build_model(derive_seed(seed, "model"))
    model.norm_stats = stats
    tcfg = TrainConfig(cfg.epochs, cfg.batch_size, cfg.lr, derive_seed(seed, "sampler"))
    try:
        rep = train(model, normalize_apply(mix.train_noisy, stats), normalize_apply(mix.train_clean, stats), tcfg)
    except NonFiniteError as exc:
        res.status, res.message = "aborted", str(exc)
        log.error("fold %s @ %g dB aborted: %s", subject, snr, exc)
        return res
    res.loss, res.train_seconds = rep.epoch_loss, rep.wall_time_s
    if cfg.save_checkpoints:
        res.checkpoint = checkpoint_section(model)

    # held-out subject
    recon_segs = denoise_segments(model, normalize_apply(mix.test_noisy, stats))
    recon = overlap_add(recon_segs, norm_stats=stats)
    bpf = overlap_add(mix.test_noisy)
    clean = prep.clean_spans[subject]
    res.metrics = {"bpf": recon_metrics(bpf, clean, integrator=integ),
                   "recon": recon_metrics(recon, clean, integrator=integ)}
    test_tabs = {t: signal_features(sig, subject, t, integ, cfg.feature_window_s)[0]
                 for t, sig in (("bpf", bpf), ("recon", recon))}
    res.features = FeatureTable.concat([test_tabs["bpf"], test_tabs["recon"], prep.clean_features[subject]])
    if keep_signals:
        res.signals = {"clean": clean, "bpf": bpf, "recon": recon}

    # training subjects: noisy windows as mixed, denoised in-sample by this fold's model
    n_orig = len(train_clean)
    tr_noisy = mix.train_noisy.take(np.arange(n_orig))
    tr_recon = denoise_segments(model, normalize_apply(tr_noisy, stats))
    tr_recon = tr_recon.with_segments(tr_recon.segments * stats.std + stats.mean)
    train_tabs = {"bpf": [], "recon": []}
    for s in train_ids:
        for t, segs in (("bpf", tr_noisy), ("recon", tr_recon)):
            train_tabs[t].append(signal_features(_subject_signal(segs, s), s, t, integ, cfg.feature_window_s)[0])
    for t in ("bpf", "recon"):
        res.classification.update(_classify(FeatureTable.concat(train_tabs[t]), test_tabs[t], t, cfg, seed))
    return res


_WORKER: dict = {}


def _init_worker(prep, cfg):
    _WORKER["prep"], _WORKER["cfg"] = prep, cfg


def _run_task(task):
    snr, subject, keep = task
    prep, cfg = _WORKER["prep"], _WORKER["cfg"]
    t0 = time.perf_counter()
    res = run_clean_fold(prep, cfg, subject) if snr is None else run_denoise_fold(prep, cfg, snr, subject, keep)
    log.info("fold %s (%s) done in %.1f s", subject, "clean" if snr is None else f"{snr:g} dB",
             time.perf_counter() - t0)
    return res


# -- report ------------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    config_hash: str
    folds: list            # FoldResult for every (snr, subject)
    clean_folds: list      # FoldResult per subject, clean signal
    manifest: dict
    wall_time_s: float = 0.0

    @property
    def partial(self) -> bool:
        return any(f.status != "ok" for f in self.folds)

    def ok_folds(self, snr=None):
        return [f for f in self.folds if f.status == "ok" and (snr is None or f.snr_db == snr)]

    def features(self, snr) -> FeatureTable:
        return FeatureTable.concat([f.features for f in self.ok_folds(snr)])

    def classification(self, snr) -> dict:
        """(signal_type, classifier) -> list of FoldMetrics, clean rows repeated per SNR."""
        out = {}
        folds = self.ok_folds(snr)
        subjects = {f.subject for f in folds}
        for f in sorted(folds, key=lambda f: f.subject):
            for k, m in f.classification.items():
                out.setdefault(k, []).append(m)
        for f in sorted(self.clean_folds, key=lambda f: f.subject):
            if f.subject in subjects:
                for k, m in f.classification.items():
                    out.setdefault(k, []).append(m)
        return out

    def mean_metric(self, snr, signal_type, metric, scope="overall") -> float:
        return float(np.mean([getattr(f.metrics[signal_type], metric)[scope] for f in self.ok_folds(snr)]))


def run_loso(cfg: ExperimentConfig, container: RecordingContainer | None = None,
             prep: PreparedData | None = None) -> ExperimentReport:
    t0 = time.perf_counter()
    prep = prepare(cfg, container) if prep is None else prep
    subjects = prep.subjects
    if cfg.test_subjects:
        missing = sorted(set(cfg.test_subjects) - set(subjects))
        if missing:
            raise ConfigError(f"unknown test subjects {missing}")
        subjects = [s for s in subjects if s in set(cfg.test_subjects)]
    example = subjects[0]
    tasks = [(snr, s, s == example) for snr in cfg.snr_db for s in subjects] + [(None, s, False) for s in subjects]
    if cfg.jobs == 1:
        _init_worker(prep, cfg)
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker, initargs=(prep, cfg)) as ex:
            results = list(ex.map(_run_task, tasks))
    folds = [r for r in results if r.snr_db is not None]
    clean = [r for r in results if r.snr_db is None]
    return ExperimentReport(cfg, cfg.hash(), folds, clean, prep.manifest, time.perf_counter() - t0)


# -- tables ---------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.10g}"
    return str(v)


def _csv(report: ExperimentReport, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={report.config_hash} master_seed={report.config.master_seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _snrs(report):
    return report.config.snr_db


def table_folds(report) -> str:
    rows = []
    for f in sorted(report.folds, key=lambda f: (-f.snr_db, f.subject)):
        plan = json.loads(f.plan_json) if f.plan_json else {}
        rows.append([f.snr_db, f.subject, f.status, f.message, plan.get("test_noise_subject", ""),
                     plan.get("global_gain", np.nan), len(f.loss)])
    return _csv(report, ["target_snr_db", "subject", "status", "message", "test_noise_subject", "global_gain",
                         "epochs_completed"], rows)


def table_recon_folds(report) -> str:
    rows = []
    for f in sorted(report.ok_folds(), key=lambda f: (-f.snr_db, f.subject)):
        for t in ("bpf", "recon"):
            for scope, m in f.metrics[t].rows():
                rows.append([f.snr_db, f.subject, t, scope, cap_snr(m["snr_db"]), m["mse"], m["mae"], m["corr"],
                             m["corr_iskna"]])
    return _csv(report, ["target_snr_db", "subject", "signal_type", "scope"] + list(ReconMetrics.METRICS), rows)


def table_recon_summary(report) -> str:
    rows = []
    for snr in _snrs(report):
        folds = report.ok_folds(snr)
        for t in ("bpf", "recon"):
            for scope in SCOPES:
                for metric in ReconMetrics.METRICS:
                    vals = [getattr(f.metrics[t], metric).get(scope, np.nan) for f in folds]
                    if metric == "snr_db":
                        vals = [cap_snr(v) for v in vals]
                    m, s, lo, hi = confidence_interval(vals)
                    rows.append([snr, t, scope, metric, m, s, lo, hi, len(vals)])
    return _csv(report, ["target_snr_db", "signal_type", "scope", "metric", "mean", "std", "ci95_lo", "ci95_hi",
                         "n_folds"], rows)


def table_features(report) -> str:
    rows = []
    for snr in _snrs(report):
        tab = report.features(snr)
        order = sorted(range(len(tab)), key=lambda i: (tab.subject[i], SIGNAL_TYPES.index(tab.signal_type[i]),
                                                       tab.window_index[i]))
        for i in order:
            rows.append([snr, tab.subject[i], tab.signal_type[i], tab.condition[i], tab.window_index[i],
                         *tab.values[i]])
    return _csv(report, ["target_snr_db", "subject", "signal_type", "condition", "window_index", *FEATURES], rows)


def feature_battery(tab: FeatureTable, feature: str) -> dict:
    """Kruskal-Wallis over every (signal type, condition) group, then the gated post-hoc contrasts.

    Contrasts: baseline vs stimulation within each signal type, and clean vs
    each other signal type within each condition. Post-hoc tests pair
    per-subject group means over subjects present in every group.
    """
    groups = {}
    for t in SIGNAL_TYPES:
        for c in CONDITIONS:
            g = tab.select(signal_type=t, condition=c)
            if len(g):
                groups[(t, c)] = g
    if len(groups) < 2:
        return {}
    subj = sorted(set.intersection(*(set(g.subject) for g in groups.values())))
    paired = {k: np.array([g.select(subject=x).column(feature).mean() for x in subj]) for k, g in groups.items()}
    pairs = [((t, BASELINE), (t, STIMULATION)) for t in SIGNAL_TYPES]
    pairs += [(("clean", c), (t, c)) for c in CONDITIONS for t in SIGNAL_TYPES if t != "clean"]
    pairs = [p for p in pairs if p[0] in groups and p[1] in groups]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return omnibus_then_pairs({k: g.column(feature) for k, g in groups.items()}, pairs, paired)


def feature_statistics(tab: FeatureTable, feature: str, signal_type: str) -> dict:
    """Window-level Fisher/AUROC for one signal type plus its share of the battery."""
    t = tab.select(signal_type=signal_type)
    base = t.select(condition=BASELINE)
    stim = t.select(condition=STIMULATION)
    out = {"n_baseline": len(base), "n_stimulation": len(stim)}
    if not len(base) or not len(stim):
        return out
    tests = feature_battery(tab, feature)
    out["kw"] = tests.get("omnibus")
    out["wilcoxon"] = tests.get(((signal_type, BASELINE), (signal_type, STIMULATION)))
    if signal_type != "clean":
        for c in CONDITIONS:
            out[f"vs_clean_{c}"] = tests.get((("clean", c), (signal_type, c)))
    b, s = base.column(feature), stim.column(feature)
    try:
        out["fisher"] = fishers_ratio(s, b)
    except ValueError:
        out["fisher"] = np.nan
    out["auroc"] = auroc(s, b)
    return out


def _test_cells(r) -> list:
    return [r.statistic, r.p_value, r.stars] if r is not None else [np.nan, np.nan, ""]


def table_feature_stats(report) -> str:
    rows = []
    for snr in _snrs(report):
        tab = report.features(snr)
        for feat in FEATURES:
            for t in SIGNAL_TYPES:
                st = feature_statistics(tab, feat, t)
                rows.append([snr, feat, t, *_test_cells(st.get("kw")), *_test_cells(st.get("wilcoxon")),
                             *[x for c in CONDITIONS for x in _test_cells(st.get(f"vs_clean_{c}"))[1:]],
                             st.get("fisher", np.nan), st.get("auroc", np.nan), st["n_baseline"],
                             st["n_stimulation"]])
    vs = [f"vs_clean_{c}_{k}" for c in CONDITIONS for k in ("p", "stars")]
    return _csv(report, ["target_snr_db", "feature", "signal_type", "kw_h", "kw_p", "kw_stars", "wilcoxon_w",
                         "wilcoxon_p", "wilcoxon_stars", *vs, "fisher_ratio", "auroc", "n_baseline",
                         "n_stimulation"], rows)


def table_classification_folds(report) -> str:
    rows = []
    for snr in _snrs(report):
        folds = [f for f in report.ok_folds(snr)]
        subjects = sorted({f.subject for f in folds})
        by_subject = {f.subject: f for f in folds}
        clean = {f.subject: f for f in report.clean_folds}
        for s in subjects:
            merged = {**by_subject[s].classification, **clean[s].classification}
            for t in SIGNAL_TYPES:
                for kind in report.config.classifiers:
                    m = merged.get((t, kind))
                    if m is not None:
                        rows.append([snr, s, t, kind, *m.as_dict().values()])
    return _csv(report, ["target_snr_db", "subject", "signal_type", "classifier", *FoldMetrics.METRICS], rows)


def classification_summary(report, snr) -> dict:
    """(signal_type, classifier) -> {metric: (mean, std)} over folds."""
    out = {}
    for key, ms in report.classification(snr).items():
        out[key] = {}
        for metric in FoldMetrics.METRICS:
            v = np.array([getattr(m, metric) for m in ms], dtype=np.float64)
            v = v[np.isfinite(v)]
            out[key][metric] = (float(v.mean()) if v.size else np.nan,
                                float(v.std(ddof=1)) if v.size > 1 else np.nan)
    return out


def table_classification_summary(report) -> str:
    rows = []
    for snr in _snrs(report):
        summ = classification_summary(report, snr)
        for t in SIGNAL_TYPES:
            for kind in report.config.classifiers:
                if (t, kind) in summ:
                    s = summ[(t, kind)]
                    rows.append([snr, t, kind] + [x for m in FoldMetrics.METRICS for x in s[m]])
    head = [c for m in FoldMetrics.METRICS for c in (m, f"{m}_std")]
    return _csv(report, ["target_snr_db", "signal_type", "classifier", *head], rows)


def pooled_scores(report, snr, signal_type, kind):
    ms = report.classification(snr).get((signal_type, kind), [])
    if not ms:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate([m.probabilities for m in ms]), np.concatenate([m.labels for m in ms])


def table_roc(report) -> str:
    rows = []
    for snr in _snrs(report):
        for t in SIGNAL_TYPES:
            for kind in report.config.classifiers:
                p, y = pooled_scores(report, snr, t, kind)
                if p.size:
                    for fpr, tpr in zip(*roc_points(p, y)):
                        rows.append([snr, t, kind, fpr, tpr])
    return _csv(report, ["target_snr_db", "signal_type", "classifier", "fpr", "tpr"], rows)


def table_training(report) -> str:
    rows = [[f.snr_db, f.subject, e + 1, loss]
            for f in sorted(report.folds, key=lambda f: (-f.snr_db, f.subject)) for e, loss in enumerate(f.loss)]
    return _csv(report, ["target_snr_db", "subject", "epoch", "loss"], rows)


TABLES = {
    "folds.csv": table_folds,
    "recon_metrics_folds.csv": table_recon_folds,
    "recon_metrics_summary.csv": table_recon_summary,
    "features.csv": table_features,
    "feature_stats.csv": table_feature_stats,
    "classification_folds.csv": table_classification_folds,
    "classification_summary.csv": table_classification_summary,
    "roc.csv": table_roc,
    "training.csv": table_training,
}


def report_tables(report) -> dict:
    return {name: fn(report) for name, fn in TABLES.items()}


def emit_report(report: ExperimentReport, outdir, figures: bool = True) -> list:
    """Write CSV tables, mix plans, metadata and (optionally) SVG figures."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in report_tables(report).items():
        (out / name).write_text(text)
        written.append(out / name)
    with open(out / "mixplans.jsonl", "w") as fh:
        for f in sorted(report.folds, key=lambda f: (-f.snr_db, f.subject)):
            if f.plan_json:
                fh.write(f.plan_json + "\n")
    written.append(out / "mixplans.jsonl")
    meta = {"config": asdict(report.config), "config_hash": report.config_hash, "partial": report.partial,
            "dataset_manifest": report.manifest, "wall_time_s": round(report.wall_time_s, 1),
            "ci_method": "student-t over per-subject fold values",
            "aborted_folds": [[f.snr_db, f.subject, f.message] for f in report.folds if f.status != "ok"]}
    (out / "report.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    written.append(out / "report.json")
    if report.config.save_checkpoints:
        from .container import write_container

        ck = out / "checkpoints"
        ck.mkdir(exist_ok=True)
        for f in report.ok_folds():
            if f.checkpoint is not None:
                written.append(write_container(RecordingContainer([], {"kind": "checkpoint"}, 0.0, f.checkpoint),
                                               ck / f"{f.subject}_{f.snr_db:g}dB.skna"))
    with open(out / "report.pkl", "wb") as fh:
        pickle.dump(report, fh)
    written.append(out / "report.pkl")
    if figures:
        from . import figures as figs

        written += figs.emit_figures(report, out)
    return written


def load_report(path) -> ExperimentReport:
    p = Path(path)
    if p.is_dir():
        p = p / "report.pkl"
    with open(p, "rb") as fh:
        return pickle.load(fh)
