"""Threshold classification on fidelity scores and the associated metrics.

Fraud is the positive class.  A record is predicted non-fraud when its
fidelity is at least the threshold, so the boundary case goes to non-fraud.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import io

FRAUD = 1
NON_FRAUD = 0
LABEL_NAMES = {FRAUD: "fraud", NON_FRAUD: "non-fraud"}

DEFAULT_THRESHOLDS = (0.40, 0.45, 0.50, 0.55, 0.65)
OVERLAP_BINS = 50

METRIC_COLUMNS = ("threshold", "accuracy", "precision", "recall", "specificity",
                  "f1", "g_mean", "mcc", "tp", "tn", "fp", "fn", "degenerate")


@dataclass(frozen=True)
class FidelityRecord:
    fidelity: float
    true_label: int
    sample_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        if self.true_label not in (FRAUD, NON_FRAUD):
            raise ValueError(f"label must be 0 or 1, got {self.true_label}")


@dataclass(frozen=True)
class MetricsReport:
    threshold: float
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    g_mean: float
    mcc: float
    # Metrics whose denominator vanished; they are reported as 0.
    degenerate: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d

    def row(self) -> list:
        d = self.to_dict()
        d["degenerate"] = ";".join(self.degenerate)
        return [d[c] for c in METRIC_COLUMNS]


@dataclass(frozen=True)
class DistributionStats:
    mean_nonfraud: float
    std_nonfraud: float
    mean_fraud: float
    std_fraud: float
    cohens_d: float
    overlap_coefficient: float
    n_nonfraud: int
    n_fraud: int
    bins: int = OVERLAP_BINS

    def to_dict(self) -> dict:
        return asdict(self)


def classify_record(fidelity: float, threshold: float) -> int:
    return NON_FRAUD if fidelity >= threshold else FRAUD


def _arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, tuple) and len(records) == 2:
        f, y = records
        return np.asarray(f, dtype=float), np.asarray(y, dtype=int)
    records = list(records)
    return (np.array([r.fidelity for r in records], dtype=float),
            np.array([r.true_label for r in records], dtype=int))


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics_from_counts(threshold: float, tp: int, tn: int, fp: int, fn: int) -> MetricsReport:
    total = tp + tn + fp + fn
    if total == 0:
        raise ValueError("no records to score")
    flags: list[str] = []
    precision = _ratio(tp, tp + fp, "precision", flags)
    recall = _ratio(tp, tp + fn, "recall", flags)
    specificity = _ratio(tn, tn + fp, "specificity", flags)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", flags)
    den = float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = _ratio(float(tp) * tn - float(fp) * fn, math.sqrt(den), "mcc", flags)
    return MetricsReport(
        threshold=float(threshold), tp=int(tp), tn=int(tn), fp=int(fp), fn=int(fn),
        accuracy=(tp + tn) / total, precision=precision, recall=recall,
        specificity=specificity, f1=f1, g_mean=math.sqrt(recall * specificity),
        mcc=mcc, degenerate=tuple(flags),
    )


def compute_metrics(records, threshold: float) -> MetricsReport:
    """Confusion counts and rates at one threshold.

    ``records`` is an iterable of :class:`FidelityRecord` or a
    ``(fidelities, labels)`` pair of arrays.
    """
    f, y = _arrays(records)
    if f.size == 0:
        raise ValueError("empty record set")
    pred_fraud = f < threshold
    is_fraud = y == FRAUD
    tp = int(np.sum(pred_fraud & is_fraud))
    fp = int(np.sum(pred_fraud & ~is_fraud))
    fn = int(np.sum(~pred_fraud & is_fraud))
    tn = int(np.sum(~pred_fraud & ~is_fraud))
    return metrics_from_counts(threshold, tp, tn, fp, fn)


def threshold_sweep(records, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> list[MetricsReport]:
    if len(thresholds) == 0:
        raise ValueError("threshold list is empty")
    f, y = _arrays(records)
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
    return [compute_metrics((f, y), t) for t in thresholds]


def best_report(reports: Iterable[MetricsReport], key: str = "f1") -> MetricsReport:
    """Highest ``key``; ties go to the earliest report."""
    best = None
    for r in reports:
        if best is None or getattr(r, key) > getattr(best, key):
            best = r
    if best is None:
        raise ValueError("no reports")
    return best


def distribution_stats(records, bins: int = OVERLAP_BINS) -> DistributionStats:
    """Class means/stds (population), Cohen's d and histogram overlap.

    Cohen's d pools by averaging the two variances.  The overlap coefficient
    sums the bin-wise minimum of the two normalised histograms on [0, 1].
    """
    f, y = _arrays(records)
    a, b = f[y == NON_FRAUD], f[y == FRAUD]
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least two records of each class")
    pooled = math.sqrt((a.var() + b.var()) / 2)
    diff = abs(a.mean() - b.mean())
    d = diff / pooled if pooled > 0 else (0.0 if diff == 0 else math.inf)
    edges = np.linspace(0.0, 1.0, bins + 1)
    ha = np.histogram(a, edges)[0] / len(a)
    hb = np.histogram(b, edges)[0] / len(b)
    return DistributionStats(
        float(a.mean()), float(a.std()), float(b.mean()), float(b.std()),
        float(d), float(np.minimum(ha, hb).sum()), len(a), len(b), bins,
    )


@dataclass
class PrevalenceBlock:
    fraction: float
    n_fraud: int
    reports: list[MetricsReport] = field(default_factory=list)


def prevalence_sweep(nonfraud, fraud_pool, fractions: Sequence[float] = (0.2, 0.4, 0.6, 0.8),
                     thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                     seed: int = 0) -> list[PrevalenceBlock]:
    """Metrics per threshold with a seeded subsample of the fraud pool per fraction.

    ``nonfraud`` and ``fraud_pool`` are fidelity arrays (or record lists).
    A fraction of 1.0 uses the whole pool unchanged.
    """
    f_nf = _scores(nonfraud)
    f_fr = _scores(fraud_pool)
    blocks = []
    for frac in fractions:
        if not 0 < frac <= 1:
            raise ValueError(f"fraction {frac} outside (0, 1]")
        n = int(math.floor(frac * len(f_fr) + 0.5))
        if n < 1:
            raise ValueError(f"fraud pool of {len(f_fr)} too small for fraction {frac}")
        if frac == 1.0:
            sub = f_fr
        else:
            rng = np.random.default_rng([seed, int(round(frac * 1_000_000))])
            sub = f_fr[rng.choice(len(f_fr), size=n, replace=False)]
        f = np.r_[f_nf, sub]
        y = np.r_[np.zeros(len(f_nf), int), np.ones(len(sub), int)]
        blocks.append(PrevalenceBlock(float(frac), n, threshold_sweep((f, y), thresholds)))
    return blocks


def _scores(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(float)
    x = list(x)
    if x and isinstance(x[0], FidelityRecord):
        return np.array([r.fidelity for r in x])
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# output


def write_metrics_csv(path: str | Path, reports: Sequence[MetricsReport], meta=None) -> None:
    io.write_csv(path, METRIC_COLUMNS, (r.row() for r in reports), meta)


def write_records_csv(path: str | Path, records: Sequence[FidelityRecord], meta=None) -> None:
    io.write_csv(path, ("sample_id", "fidelity", "label"),
                 ((r.sample_id, r.fidelity, r.true_label) for r in records), meta)


def write_prevalence_csv(path: str | Path, blocks: Sequence[PrevalenceBlock], meta=None) -> None:
    header = ("fraction", "n_fraud") + METRIC_COLUMNS
    rows = ([b.fraction, b.n_fraud] + r.row() for b in blocks for r in b.reports)
    io.write_csv(path, header, rows, meta)
