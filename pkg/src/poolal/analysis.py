"""Evaluation metrics, AUBC, paired t-tests and win matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import ValidationError

ALPHA = 0.05


def compute_metrics(predictions, truths, class_count: int):
    """Accuracy and macro precision/recall/F1 over all ``class_count`` classes.

    A class with no predictions (or no true samples) contributes 0 to the
    affected per-class terms but still counts in the macro mean.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(truths, dtype=np.int64)
    if pred.size == 0 or pred.shape != true.shape:
        raise ValidationError("predictions and truths must be non-empty and of equal length")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    accuracy = tp.sum() / pred.size
    return float(accuracy), float(precision.mean()), float(recall.mean()), float(f1.mean())


@dataclass(frozen=True)
class LearningCurve:
    budgets: tuple
    accuracies: tuple

    def __post_init__(self):
        b = tuple(int(x) for x in self.budgets)
        a = tuple(float(x) for x in self.accuracies)
        if len(b) != len(a):
            raise ValidationError("budgets and accuracies differ in length")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValidationError("budgets must be strictly increasing")
        object.__setattr__(self, "budgets", b)
        object.__setattr__(self, "accuracies", a)


def aubc(curve: LearningCurve) -> float:
    """Trapezoidal area under accuracy-vs-budget, divided by the budget span."""
    b, a = curve.budgets, curve.accuracies
    if len(b) < 2:
        raise ValidationError("AUBC needs at least two curve points")
    # integrate the offset from the first point so a flat curve comes back exactly
    ref = a[0]
    area = 0.0
    for i in range(len(b) - 1):
        area += (b[i + 1] - b[i]) * ((a[i] - ref) + (a[i + 1] - ref)) / 2.0
    return ref + area / (b[-1] - b[0])


def student_t_cdf(t: float, df: int) -> float:
    """Student-t CDF through the regularised incomplete beta function."""
    if df < 1:
        raise ValidationError("df must be >= 1")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0:
        return 0.5
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(1.0 - tail if t > 0 else tail)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool
    degenerate: bool = False

    def __iter__(self):
        return iter((self.t, self.p, self.significant))


def paired_ttest(curve_i, curve_j, alpha: float = ALPHA) -> TTestResult:
    """Two-sided paired t-test on per-cycle accuracies.

    ``significant`` means method ``i`` beats ``j``: ``p < alpha`` and the mean
    difference is positive.
    """
    a = np.asarray(curve_i, dtype=np.float64)
    b = np.asarray(curve_j, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValidationError("paired t-test needs two equal-length curves with >= 2 points")
    n = a.size
    diff = a - b
    mean = diff.sum() / n
    s = math.sqrt(((diff - mean) ** 2).sum() / (n - 1))
    if s == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, mean), 0.0, mean > 0, degenerate=True)
    t = mean / (s / math.sqrt(n))
    p = 2.0 * student_t_cdf(-abs(t), n - 1)
    return TTestResult(t, p, bool(p < alpha and mean > 0))


@dataclass
class ComparisonMatrix:
    methods: list
    wins: np.ndarray
    settings: int = 0

    @property
    def totals(self) -> np.ndarray:
        return self.wins.sum(axis=1)

    def check(self) -> None:
        w = self.wins
        if (np.diag(w) != 0).any():
            raise ValidationError("comparison matrix has non-zero diagonal")
        if (w < 0).any() or ((w + w.T) > self.settings).any():
            raise ValidationError("win counts exceed the number of settings")


def build_comparison_matrix(results: dict, methods=None, alpha: float = ALPHA) -> ComparisonMatrix:
    """``results`` maps a setting key to ``{method: per-cycle accuracies}``.

    A pair missing from a setting is skipped for that setting.
    """
    if methods is None:
        seen = []
        for curves in results.values():
            for m in curves:
                if m not in seen:
                    seen.append(m)
        methods = seen
    methods = list(methods)
    pos = {m: i for i, m in enumerate(methods)}
    wins = np.zeros((len(methods), len(methods)), dtype=np.int64)
    for curves in results.values():
        present = [m for m in methods if m in curves]
        for mi in present:
            for mj in present:
                if mi != mj and paired_ttest(curves[mi], curves[mj], alpha).significant:
                    wins[pos[mi], pos[mj]] += 1
    return ComparisonMatrix(methods, wins, settings=len(results))


def summarize_selection_time(trials):
    """Mean total selection seconds per trial, and mean seconds per cycle index."""
    if not trials:
        raise ValidationError("no trials to summarise")
    totals = [t.total_selection_seconds for t in trials]
    n_cycles = max(len(t.records) for t in trials)
    per_cycle = []
    for c in range(n_cycles):
        vals = [t.records[c].selection_seconds for t in trials if c < len(t.records)]
        per_cycle.append(sum(vals) / len(vals))
    return sum(totals) / len(totals), per_cycle


def rank_by_time(mean_seconds: dict) -> list:
    """Strategies sorted slowest first, as ``(name, seconds, rank)``."""
    ordered = sorted(mean_seconds.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(name, secs, r + 1) for r, (name, secs) in enumerate(ordered)]
