"""Reconstruction metrics and the non-parametric test battery."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .dsp import CONDITIONS, SampledSignal
from .errors import DegenerateDataError, InsufficientPairsError, UndefinedCorrelationError
from .features import IntegratorConfig, iskna

SNR_CAP_DB = 99.0
EXACT_WILCOXON_MAX_N = 25
ALPHA = 0.05
SCOPES = CONDITIONS + ("overall",)


def stars(p: float) -> str:
    if not np.isfinite(p):
        return "n.s."
    if p <= 0.001:
        return "***"
    if p <= 0.01:
        return "**"
    if p <= 0.05:
        return "*"
    return "n.s."


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    method: str
    warning: str | None = None

    @property
    def stars(self) -> str:
        return stars(self.p_value)

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA


# -- reconstruction metrics --------------------------------------------------


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance input")
    return float(np.clip(np.dot(a, b) / den, -1.0, 1.0))


def snr_db(candidate, clean) -> float:
    """10*log10(sum clean^2 / sum (candidate - clean)^2); +inf when identical."""
    c = np.asarray(clean, dtype=np.float64)
    e = np.asarray(candidate, dtype=np.float64) - c
    pe = float(np.dot(e, e))
    if pe == 0.0:
        return np.inf
    pc = float(np.dot(c, c))
    return -np.inf if pc == 0.0 else 10.0 * np.log10(pc / pe)


def cap_snr(v: float) -> float:
    return float(np.clip(v, -SNR_CAP_DB, SNR_CAP_DB))


@dataclass
class ReconMetrics:
    """Each field maps scope ('baseline', 'stimulation', 'overall') to a value."""

    corr: dict = field(default_factory=dict)
    corr_iskna: dict = field(default_factory=dict)
    mse: dict = field(default_factory=dict)
    mae: dict = field(default_factory=dict)
    snr_db: dict = field(default_factory=dict)

    METRICS = ("snr_db", "mse", "mae", "corr", "corr_iskna")

    def rows(self):
        for scope in SCOPES:
            if scope in self.mse:
                yield scope, {m: getattr(self, m)[scope] for m in self.METRICS}


def recon_metrics(candidate: SampledSignal, clean: SampledSignal, masks: dict | None = None,
                  integrator: IntegratorConfig = IntegratorConfig()) -> ReconMetrics:
    """Metrics of ``candidate`` against ``clean``, per condition and overall.

    ``masks`` defaults to the condition masks of ``clean``.  iSKNA is computed
    on the full traces before masking.
    """
    if len(candidate) != len(clean) or candidate.fs != clean.fs:
        raise ValueError("candidate and clean differ in length or rate")
    if masks is None:
        masks = {c: clean.condition_mask(c) for c in CONDITIONS}
    masks = {k: np.asarray(v, dtype=bool) for k, v in masks.items() if np.any(v)}
    masks["overall"] = np.ones(len(clean), dtype=bool)
    x, y = np.asarray(candidate.samples, np.float64), np.asarray(clean.samples, np.float64)
    ix, iy = iskna(candidate, integrator).samples, iskna(clean, integrator).samples
    out = ReconMetrics()
    for scope, m in masks.items():
        d = x[m] - y[m]
        out.mse[scope] = float(np.mean(d * d))
        out.mae[scope] = float(np.mean(np.abs(d)))
        out.snr_db[scope] = snr_db(x[m], y[m])
        out.corr[scope] = pearson(x[m], y[m])
        out.corr_iskna[scope] = pearson(ix[m], iy[m])
    return out


# -- hypothesis tests --------------------------------------------------------


def kruskal_wallis(groups) -> TestResult:
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("every group must be non-empty")
    pooled = np.concatenate(groups)
    N = pooled.size
    ranks = sps.rankdata(pooled)
    h, pos = 0.0, 0
    for g in groups:
        r = ranks[pos : pos + g.size]
        h += r.sum() ** 2 / g.size
        pos += g.size
    h = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    _, counts = np.unique(pooled, return_counts=True)
    corr = 1.0 - float(np.sum(counts**3 - counts)) / (N**3 - N) if N > 1 else 0.0
    if corr <= 0.0:
        return TestResult(0.0, 1.0, N, "kruskal-wallis", "all values tied")
    h = max(h / corr, 0.0)
    return TestResult(float(h), float(sps.chi2.sf(h, len(groups) - 1)), N, "kruskal-wallis")


def _signed_rank_null(doubled_ranks: np.ndarray) -> np.ndarray:
    """Null distribution of 2*W+ as probabilities indexed by value."""
    total = int(doubled_ranks.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        nxt = dist.copy()
        nxt[r:] += dist[: total + 1 - r]
        dist = nxt * 0.5
    return dist


def wilcoxon_signed_rank(x, y) -> TestResult:
    """Two-sided paired signed-rank test; exact up to n = 25."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("paired samples must be one-dimensional")
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        msg = "all paired differences are zero"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return TestResult(0.0, 1.0, 0, "wilcoxon-degenerate", msg)
    if n < 5:
        raise InsufficientPairsError(f"{n} non-zero differences; at least 5 are needed")
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        dist = _signed_rank_null(doubled)
        k = int(round(2 * w_plus))
        lower = dist[: k + 1].sum()
        upper = dist[k:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
        return TestResult(w_plus, float(p), n, "wilcoxon-exact")
    _, counts = np.unique(np.abs(d), return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(counts**3 - counts)) / 48.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / np.sqrt(var)
    return TestResult(w_plus, float(min(1.0, 2.0 * sps.norm.sf(z))), n, "wilcoxon-normal")


def fishers_ratio(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    va = a.var(ddof=1) if a.size > 1 else 0.0
    vb = b.var(ddof=1) if b.size > 1 else 0.0
    if va + vb == 0.0:
        raise DegenerateDataError("both groups have zero variance")
    return float((a.mean() - b.mean()) ** 2 / (va + vb))


def auroc(pos, neg) -> float:
    """P(pos > neg) + 0.5 P(pos == neg), via the Mann-Whitney U statistic."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both classes must be non-empty")
    ranks = sps.rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def confidence_interval(values, level: float = 0.95) -> tuple:
    """(mean, sd, lo, hi) with a Student-t interval over the given values."""
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return (np.nan,) * 4
    m = float(v.mean())
    if v.size == 1:
        return m, np.nan, np.nan, np.nan
    s = float(v.std(ddof=1))
    half = float(sps.t.ppf(0.5 + level / 2.0, v.size - 1)) * s / np.sqrt(v.size)
    return m, s, m - half, m + half


def omnibus_then_pairs(groups: dict, pairs=None, paired_samples: dict | None = None) -> dict:
    """Kruskal-Wallis over ``groups``; pairwise signed-rank tests only if it rejects.

    ``paired_samples`` supplies the per-subject paired vectors used post hoc
    (defaults to ``groups``).  Returns {'omnibus': TestResult, (a, b): TestResult}.
    """
    names = list(groups)
    out = {"omnibus": kruskal_wallis([groups[k] for k in names])}
    if not out["omnibus"].significant:
        return out
    paired_samples = groups if paired_samples is None else paired_samples
    for a, b in pairs or [(names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names))]:
        try:
            out[(a, b)] = wilcoxon_signed_rank(paired_samples[b], paired_samples[a])
        except InsufficientPairsError as exc:
            out[(a, b)] = TestResult(np.nan, np.nan, 0, "wilcoxon-insufficient", str(exc))
    return out
