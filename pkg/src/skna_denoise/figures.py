"""SVG figures for an experiment report."""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .classify import roc_points  # noqa: E402
from .dsp import BASELINE, STIMULATION  # noqa: E402
from .features import FEATURES, SIGNAL_TYPES, IntegratorConfig, askna, iskna  # noqa: E402
from .stats import pearson  # noqa: E402

log = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "skna-denoise"
SVG_META = {"Date": None}
LABELS = {"clean": "Clean", "bpf": "BPF (noisy)", "recon": "Reconstructed"}
COLORS = {"clean": "tab:green", "bpf": "tab:red", "recon": "tab:blue"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    return path


def _shade(ax, sig, t_scale=1.0):
    for p in sig.periods:
        if p.condition == STIMULATION:
            ax.axvspan(p.start / sig.fs * t_scale, p.end / sig.fs * t_scale, color="0.92", lw=0)


def iskna_triptych(signals: dict, tau: float = 0.1):
    """Clean / noisy / reconstructed iSKNA of one subject, stacked."""
    integ = IntegratorConfig(tau)
    isk = {k: iskna(v, integ) for k, v in signals.items()}
    fig, axes = plt.subplots(3, 1, figsize=(9, 6), sharex=True)
    for ax, k in zip(axes, SIGNAL_TYPES[::-1]):
        s = isk[k]
        t = np.arange(len(s)) / s.fs
        _shade(ax, s)
        ax.plot(t, s.samples, color=COLORS[k], lw=0.6)
        r = pearson(s.samples, isk["clean"].samples)
        ax.set_title(f"{LABELS[k]}  (r = {r:.2f} vs clean)", fontsize=9)
        ax.set_ylabel("iSKNA (uV)")
    axes[-1].set_xlabel("time (s, concatenated windows)")
    fig.tight_layout()
    return fig


def signal_grid(signals: dict, tau: float = 0.1, askna_window_s: float = 5.0):
    """Rows SKNA / iSKNA / aSKNA, columns clean / noisy / reconstructed."""
    integ = IntegratorConfig(tau)
    fig, axes = plt.subplots(3, 3, figsize=(11, 6), sharex=True, sharey="row")
    for j, k in enumerate(("clean", "bpf", "recon")):
        sig = signals[k]
        isig = iskna(sig, integ)
        rows = (sig, isig, askna(isig, askna_window_s))
        t = np.arange(len(sig)) / sig.fs
        for i, (s, name) in enumerate(zip(rows, ("SKNA", "iSKNA", "aSKNA"))):
            ax = axes[i, j]
            _shade(ax, s)
            ax.plot(t, s.samples, color=COLORS[k], lw=0.4 if i == 0 else 0.7)
            if j == 0:
                ax.set_ylabel(f"{name} (uV)")
        axes[0, j].set_title(LABELS[k], fontsize=9)
    for ax in axes[-1]:
        ax.set_xlabel("time (s)")
    fig.tight_layout()
    return fig


def feature_boxplots(tab, stats_rows: dict):
    """Baseline vs stimulation per feature and signal type, starred by the post-hoc test.

    ``stats_rows`` maps (feature, signal_type) -> stars string.
    """
    fig, axes = plt.subplots(2, 3, figsize=(12, 7))
    for ax, feat in zip(axes.ravel(), FEATURES):
        data, pos, ticks = [], [], []
        for j, t in enumerate(SIGNAL_TYPES):
            sub = tab.select(signal_type=t)
            for c, cond in enumerate((BASELINE, STIMULATION)):
                data.append(sub.select(condition=cond).column(feat))
                pos.append(3 * j + c)
            ticks.append(3 * j + 0.5)
        bp = ax.boxplot(data, positions=pos, widths=0.8, patch_artist=True, showfliers=False)
        for k, patch in enumerate(bp["boxes"]):
            patch.set_facecolor("0.85" if k % 2 == 0 else "tab:orange")
        top = max((float(np.max(d)) for d in data if d.size), default=1.0)
        for j, t in enumerate(SIGNAL_TYPES):
            ax.text(ticks[j], top * 1.05 if top > 0 else 0.1, stats_rows.get((feat, t), ""), ha="center",
                    fontsize=9)
        ax.set_xticks(ticks, [LABELS[t] for t in SIGNAL_TYPES], fontsize=7)
        ax.set_title(feat, fontsize=9)
    fig.tight_layout()
    return fig


def roc_figure(report, snr):
    """One axis, one curve per (signal type, classifier)."""
    from .experiment import pooled_scores

    fig, ax = plt.subplots(figsize=(5.5, 5))
    styles = {"random_forest": "-", "svm_rbf": "--", "logistic_regression": ":"}
    for t in SIGNAL_TYPES:
        for kind in report.config.classifiers:
            p, y = pooled_scores(report, snr, t, kind)
            if p.size == 0 or y.min() == y.max():
                continue
            fpr, tpr = roc_points(p, y)
            ax.plot(fpr, tpr, styles.get(kind, "-"), color=COLORS[t], label=f"{LABELS[t]} / {kind}")
    ax.plot([0, 1], [0, 1], color="0.6", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"ROC at {snr:g} dB", fontsize=10)
    ax.legend(fontsize=6, loc="lower right")
    fig.tight_layout()
    return fig


def bar_figure(report, snr):
    from .experiment import classification_summary

    summ = classification_summary(report, snr)
    kinds = report.config.classifiers
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, metric, scale in ((axes[0], "accuracy", 1.0), (axes[1], "auc", 100.0)):
        for j, t in enumerate(SIGNAL_TYPES):
            means = [summ.get((t, k), {}).get(metric, (np.nan, np.nan))[0] * scale for k in kinds]
            ax.bar(np.arange(len(kinds)) + 0.27 * (j - 1), means, width=0.27, color=COLORS[t], label=LABELS[t])
        ax.set_xticks(np.arange(len(kinds)), kinds, fontsize=8)
        ax.set_ylim(0, 105)
        ax.set_ylabel(f"{metric} (%)")
    axes[0].legend(fontsize=7)
    fig.suptitle(f"LOSO classification at {snr:g} dB", fontsize=10)
    fig.tight_layout()
    return fig


def emit_figures(report, outdir) -> list:
    from .experiment import feature_statistics

    out = Path(outdir)
    written = []
    cfg = report.config
    for snr in cfg.snr_db:
        tag = f"{snr:g}dB"
        ex = next((f for f in report.ok_folds(snr) if f.signals), None)
        if ex is not None:
            written.append(_save(iskna_triptych(ex.signals, cfg.tau), out / f"fig_iskna_{tag}.svg"))
            written.append(_save(signal_grid(ex.signals, cfg.tau, cfg.askna_window_s), out / f"fig_grid_{tag}.svg"))
        tab = report.features(snr)
        if len(tab) == 0:
            log.warning("feature table at %s is empty; boxplot figure skipped", tag)
        else:
            marks = {}
            for feat in FEATURES:
                for t in SIGNAL_TYPES:
                    st = feature_statistics(tab, feat, t)
                    wx = st.get("wilcoxon")
                    marks[(feat, t)] = wx.stars if wx is not None else "n.s."
            written.append(_save(feature_boxplots(tab, marks), out / f"fig_boxplots_{tag}.svg"))
        if report.classification(snr):
            written.append(_save(roc_figure(report, snr), out / f"fig_roc_{tag}.svg"))
            written.append(_save(bar_figure(report, snr), out / f"fig_bars_{tag}.svg"))
        else:
            log.warning("no classification results at %s; ROC and bar figures skipped", tag)
    return written
