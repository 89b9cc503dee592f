"""Metrics, Youden thresholding, bootstrap summaries, paired comparisons,
intervention gaps and downstream decision policies.

Conventions: the hard prediction is ``score >= tau``; every metric except
Brier is reported in percent; AUROC is the average-rank Mann-Whitney
statistic and AUPRC is step-wise average precision with tied scores
entering together.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .seeding import derive_rng

METRICS = ("auroc", "auprc", "brier", "f1", "accuracy", "balanced_accuracy",
           "sensitivity", "specificity", "precision")
RANKING_METRICS = frozenset({"auroc", "auprc"})
THRESHOLD_METRICS = ("precision", "sensitivity", "specificity", "accuracy",
                     "balanced_accuracy", "f1")


def _arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length ({s.size} vs {y.size})")
    if y.size and not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(int)


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_at(scores, labels, tau: float) -> Confusion:
    s, y = _arrays(scores, labels)
    return _confusion(s, y, tau)


def _confusion(s: np.ndarray, y: np.ndarray, tau: float) -> Confusion:
    pred = s >= tau
    pos = y == 1
    return Confusion(int(np.sum(pred & pos)), int(np.sum(~pred & ~pos)),
                     int(np.sum(pred & ~pos)), int(np.sum(~pred & pos)))


def _auroc(s: np.ndarray, y: np.ndarray, n_pos: int) -> float:
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * (y.size - n_pos)))


def _average_precision(s: np.ndarray, y: np.ndarray, n_pos: int) -> float:
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each group of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(y)[ends]
    d_tp = np.diff(tp, prepend=0)
    return float(np.sum((tp / (ends + 1)) * (d_tp / n_pos)))


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUROC with average ranks for ties."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("AUROC is undefined for single-class input")
    return _auroc(s, y, n_pos)


def pr_auc(scores, labels) -> float:
    """Average precision; tied scores form one cut-point."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("AUPRC is undefined without positives")
    return _average_precision(s, y, n_pos)


def brier(scores, labels) -> float:
    s, y = _arrays(scores, labels)
    if s.size == 0:
        raise ValueError("Brier score of an empty set")
    return _brier(s, y)


def _brier(s: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> float:
    # exactly rounded sum, so an all-ones resample reproduces the point value bit for bit
    sq = (s - y) ** 2
    return math.fsum(sq if weights is None else weights * sq) / s.size


@dataclass(frozen=True)
class ThresholdSelection:
    condition_key: str
    tau_star: float
    j_value: float

    def to_dict(self) -> dict:
        return asdict(self)


def youden_candidates(scores) -> np.ndarray:
    """Midpoints between distinct sorted scores plus one sentinel on each side."""
    u = np.unique(np.asarray(scores, dtype=float))
    if u.size == 0:
        raise ValueError("no scores")
    mids = (u[:-1] + u[1:]) / 2.0
    return np.r_[np.nextafter(u[0], -np.inf), mids, np.nextafter(u[-1], np.inf)]


def select_threshold_youden(val_scores, val_labels, condition_key: str = "") -> ThresholdSelection:
    """Threshold maximizing sensitivity + specificity - 1; smallest on ties."""
    s, y = _arrays(val_scores, val_labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("Youden selection needs both classes in validation")
    cand = youden_candidates(s)
    pos_sorted = np.sort(s[y == 1])
    neg_sorted = np.sort(s[y == 0])
    tp = n_pos - np.searchsorted(pos_sorted, cand, side="left")
    tn = np.searchsorted(neg_sorted, cand, side="left")
    # integer-scaled J avoids float ties deciding the argmax
    best = int(np.argmax(tp * n_neg + tn * n_pos))
    j = tp[best] / n_pos + tn[best] / n_neg - 1.0
    return ThresholdSelection(condition_key, float(cand[best]), float(j))


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def thresholded_metrics(scores, labels, tau: float) -> dict:
    """Percent-scale threshold metrics; 0/0 cases give 0 and are listed in ``degenerate``."""
    return _from_confusion(confusion_at(scores, labels, tau))


def _from_confusion(c: Confusion) -> dict:
    degenerate = []
    prec, d = _ratio(c.tp, c.tp + c.fp)
    if d:
        degenerate.append("precision")
    sens, d = _ratio(c.tp, c.tp + c.fn)
    if d:
        degenerate.append("sensitivity")
    spec, d = _ratio(c.tn, c.tn + c.fp)
    if d:
        degenerate.append("specificity")
    acc, _ = _ratio(c.tp + c.tn, c.n)
    if prec + sens > 0:
        f1 = 2 * prec * sens / (prec + sens)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return {
        "precision": 100 * prec,
        "sensitivity": 100 * sens,
        "specificity": 100 * spec,
        "accuracy": 100 * acc,
        "balanced_accuracy": 100 * ((sens + spec) / 2),
        "f1": 100 * f1,
        "confusion": asdict(c),
        "degenerate": degenerate,
    }


@dataclass
class MetricReport:
    condition_key: str
    n: int
    tau: float
    auroc: float | None
    auprc: float | None
    brier: float
    f1: float
    accuracy: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    confusion: dict = field(default_factory=dict)
    degenerate: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def metric_values(scores, labels, tau: float, metrics: Sequence[str] = METRICS) -> dict:
    """Requested metrics on one sample; ranking metrics are None when undefined."""
    s, y = _arrays(scores, labels)
    return _metric_values(s, y, tau, metrics)


def _metric_values(s: np.ndarray, y: np.ndarray, tau: float, metrics: Sequence[str]) -> dict:
    n_pos = int(y.sum())
    both = 0 < n_pos < y.size
    out: dict = {}
    if "auroc" in metrics:
        out["auroc"] = 100 * _auroc(s, y, n_pos) if both else None
    if "auprc" in metrics:
        out["auprc"] = 100 * _average_precision(s, y, n_pos) if both else None
    if "brier" in metrics:
        out["brier"] = _brier(s, y)
    if any(m in THRESHOLD_METRICS for m in metrics):
        tm = _from_confusion(_confusion(s, y, tau))
        out.update({m: tm[m] for m in THRESHOLD_METRICS if m in metrics})
    return out


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _replicate_metrics(s: np.ndarray, y: np.ndarray, tau: float, counts: np.ndarray,
                       metrics: Sequence[str]) -> dict[str, np.ndarray]:
    """Metrics of many resamples at once; NaN marks an undefined ranking metric.

    ``counts[b, i]`` is how often row ``i`` appears in resample ``b``. Rows are
    grouped into distinct score levels once, so each replicate costs a few
    weighted sums instead of a sort.
    """
    n = s.size
    out: dict[str, np.ndarray] = {}
    w_pos = counts * y
    P = w_pos.sum(axis=1)
    N = n - P
    both = (P > 0) & (N > 0)
    if RANKING_METRICS.intersection(metrics):
        order = np.argsort(s, kind="mergesort")
        ss = s[order]
        starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
        pl = np.add.reduceat(w_pos[:, order], starts, axis=1)  # positives per level, ascending
        nl = np.add.reduceat(counts[:, order], starts, axis=1) - pl
        if "auroc" in metrics:
            below = np.cumsum(nl, axis=1) - nl
            u = np.sum(pl * (below + 0.5 * nl), axis=1)
            out["auroc"] = np.where(both, 100 * _safe_div(u, P * N), np.nan)
        if "auprc" in metrics:
            pd, kd = pl[:, ::-1], (pl + nl)[:, ::-1]  # descending levels
            tp, k = np.cumsum(pd, axis=1), np.cumsum(kd, axis=1)
            ap = np.sum(_safe_div(tp, k) * _safe_div(pd, P[:, None]), axis=1)
            out["auprc"] = np.where(both, 100 * ap, np.nan)
    if "brier" in metrics:
        out["brier"] = np.array([_brier(s, y, c) for c in counts])
    if any(m in THRESHOLD_METRICS for m in metrics):
        pred = s >= tau
        tp = counts @ (pred & (y == 1))
        fp = counts @ (pred & (y == 0))
        fn = P - tp
        tn = N - fp
        prec, sens, spec = _safe_div(tp, tp + fp), _safe_div(tp, P), _safe_div(tn, N)
        vals = {
            "precision": 100 * prec,
            "sensitivity": 100 * sens,
            "specificity": 100 * spec,
            "accuracy": 100 * ((tp + tn) / n),
            "balanced_accuracy": 100 * ((sens + spec) / 2),
            "f1": 100 * _safe_div(2 * prec * sens, prec + sens),
        }
        out.update({m: vals[m] for m in THRESHOLD_METRICS if m in metrics})
    return out


def _resample_counts(resamples: Sequence[Sequence[int]], n: int) -> np.ndarray:
    return np.stack([np.bincount(np.asarray(idx, dtype=int), minlength=n) for idx in resamples])


def evaluate_condition(scores, labels, tau: float, condition_key: str = "") -> MetricReport:
    s, y = _arrays(scores, labels)
    vals = metric_values(s, y, tau)
    tm = thresholded_metrics(s, y, tau)
    return MetricReport(condition_key=condition_key, n=int(s.size), tau=float(tau),
                        confusion=tm["confusion"], degenerate=tm["degenerate"], **vals)


@dataclass
class MetricSummary:
    mean: float | None
    sd: float | None
    ci_lo: float | None
    ci_hi: float | None
    n_valid: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricSummary":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(None, None, None, None, 0)
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        lo, hi = np.percentile(v, [2.5, 97.5])
        return cls(float(v.mean()), sd, float(lo), float(hi), int(v.size))


@dataclass
class BootstrapSummary:
    B: int
    seed: int
    tau: float
    metrics: dict[str, MetricSummary]
    skipped: dict[str, int]

    def to_dict(self) -> dict:
        return asdict(self)


def bootstrap_indices(n: int, B: int, seed: int) -> list[np.ndarray]:
    """Replicate ``b`` draws n indices from its own stream hash(seed, b)."""
    return [derive_rng(seed, "bootstrap", b).integers(0, n, size=n) for b in range(B)]


def bootstrap_evaluate(
    scores,
    labels,
    *,
    tau: float,
    B: int = 1000,
    seed: int = 0,
    metrics: Sequence[str] = METRICS,
    resamples: Sequence[Sequence[int]] | None = None,
) -> BootstrapSummary:
    """Percentile bootstrap of the requested metrics at a fixed threshold.

    Single-class resamples skip the ranking metrics for that replicate; the
    number of skips is reported per metric. ``resamples`` overrides the
    seeded index draws.
    """
    s, y = _arrays(scores, labels)
    if s.size < 2:
        raise ValueError("bootstrap needs at least two rows")
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}")
    if resamples is None:
        if B < 1:
            raise ValueError("B must be at least 1")
        resamples = bootstrap_indices(s.size, B, seed)
    values = _replicate_metrics(s, y, tau, _resample_counts(resamples, s.size), metrics)
    skipped = {m: int(np.isnan(values[m]).sum()) for m in metrics}
    return BootstrapSummary(len(resamples), seed, float(tau),
                            {m: MetricSummary.of(values[m][~np.isnan(values[m])]) for m in metrics},
                            skipped)


@dataclass
class PairedDifference:
    metric: str
    differences: np.ndarray
    summary: MetricSummary
    skipped: int

    def to_dict(self) -> dict:
        return {"metric": self.metric, "summary": asdict(self.summary), "skipped": self.skipped,
                "n_replicates": int(self.differences.size)}


def paired_bootstrap_diff(
    scores_m,
    scores_m2,
    labels,
    *,
    metric: str,
    B: int = 1000,
    seed: int = 0,
    tau_m: float = 0.5,
    tau_m2: float = 0.5,
    row_ids_m: Sequence[str] | None = None,
    row_ids_m2: Sequence[str] | None = None,
) -> PairedDifference:
    """Per-replicate metric(m) - metric(m2), both evaluated on one shared resample."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if row_ids_m is not None or row_ids_m2 is not None:
        if list(row_ids_m or ()) != list(row_ids_m2 or ()):
            raise ValueError("conditions are not aligned on identical row ids")
    a, y = _arrays(scores_m, labels)
    b, _ = _arrays(scores_m2, labels)
    counts = _resample_counts(bootstrap_indices(a.size, B, seed), a.size)
    va = _replicate_metrics(a, y, tau_m, counts, (metric,))[metric]
    vb = _replicate_metrics(b, y, tau_m2, counts, (metric,))[metric]
    d = va - vb
    valid = ~np.isnan(d)
    return PairedDifference(metric, d[valid], MetricSummary.of(d[valid]), int((~valid).sum()))


@dataclass
class GapReport:
    gaps: dict[str, float]
    mean: float
    per_category: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)


def intervention_gap(
    scores_correct,
    scores_perturbed,
    row_ids: Sequence[str],
    categories: Sequence[str] | None = None,
) -> GapReport:
    """Per-row correct-minus-perturbed score gaps with overall and per-category means."""
    c = np.asarray(scores_correct, dtype=float)
    p = np.asarray(scores_perturbed, dtype=float)
    if not (c.size == p.size == len(row_ids)) or (categories is not None and len(categories) != c.size):
        raise ValueError("intervention gap inputs are not aligned")
    if c.size == 0:
        raise ValueError("intervention gap of an empty row set")
    g = c - p
    per_cat: dict[str, list[float]] = defaultdict(list)
    for cat, v in zip(categories or (), g):
        per_cat[cat].append(v)
    return GapReport(
        gaps={rid: float(v) for rid, v in zip(row_ids, g)},
        mean=float(g.mean()),
        per_category={k: float(np.mean(v)) for k, v in sorted(per_cat.items())},
    )


DECISION_KINDS = ("accept", "three_way", "rerank")


@dataclass(frozen=True)
class DecisionPolicy:
    kind: str
    tau_acc: float | None = None
    tau_low: float | None = None
    tau_high: float | None = None
    calibration_table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in DECISION_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "accept" and self.tau_acc is None:
            raise ValueError("accept policy needs tau_acc")
        if self.kind == "three_way":
            if self.tau_low is None or self.tau_high is None or not self.tau_low < self.tau_high:
                raise ValueError("three_way policy needs tau_low < tau_high")
        if self.calibration_table is not None:
            xs, ys = zip(*self.calibration_table) if self.calibration_table else ((), ())
            if len(xs) < 2 or np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) < 0):
                raise ValueError("calibration table must have >= 2 knots, increasing x, "
                                 "nondecreasing y")

    def calibrate(self, score):
        if self.calibration_table is None:
            return score
        xs, ys = zip(*self.calibration_table)
        return np.interp(score, xs, ys)


@dataclass
class DecisionRecord:
    action: str
    raw_score: float
    calibrated_score: float
    claim: str | None = None
    evidence_ids: tuple[str, ...] = ()
    selected_index: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def apply_decision_policy(
    score,
    policy: DecisionPolicy,
    *,
    claim: str | None = None,
    evidence_ids: Sequence = (),
) -> DecisionRecord:
    """Map a support score (or candidate scores, for rerank) to an action.

    accept: ``accept`` iff calibrated score >= tau_acc, else ``reject``.
    three_way: >= tau_high accept, >= tau_low revise, else escalate.
    rerank: first index of the maximal calibrated score; ``evidence_ids`` may
    hold one package per candidate.
    """
    if policy.kind == "rerank":
        raw = np.asarray(score, dtype=float).ravel()
        if raw.size == 0:
            raise ValueError("rerank needs at least one candidate")
        cal = np.asarray(policy.calibrate(raw), dtype=float)
        i = int(np.argmax(cal))
        ev = tuple(evidence_ids[i]) if len(evidence_ids) == raw.size else tuple(evidence_ids)
        return DecisionRecord("select", float(raw[i]), float(cal[i]), claim, ev, i)
    raw = float(score)
    cal = float(policy.calibrate(raw))
    if policy.kind == "accept":
        action = "accept" if cal >= policy.tau_acc else "reject"
    elif cal >= policy.tau_high:
        action = "accept"
    elif cal >= policy.tau_low:
        action = "revise"
    else:
        action = "escalate"
    return DecisionRecord(action, raw, cal, claim, tuple(evidence_ids))
