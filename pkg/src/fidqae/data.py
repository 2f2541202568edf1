"""Transaction CSV ingestion, scaling, feature selection and splits."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from .model import ZeroNormError, l2_normalize

log = logging.getLogger(__name__)

LABEL_COLUMN = "Class"
DEFAULT_SCALED_COLUMNS = ("Time", "Amount")


class DataError(ValueError):
    """Input data cannot be used (missing file, missing label, bad sizes)."""


@dataclass(eq=False)
class TransactionTable:
    columns: list[str]
    values: np.ndarray
    labels: np.ndarray
    row_ids: np.ndarray
    dropped_rows: int = 0
    label_column: str = LABEL_COLUMN

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.row_ids = np.asarray(self.row_ids, dtype=int)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("value matrix does not match the column list")
        if not (len(self.values) == len(self.labels) == len(self.row_ids)):
            raise DataError("values, labels and row ids differ in length")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError(f"{self.label_column} column must contain only 0/1")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_fraud(self) -> int:
        return int(self.labels.sum())

    def subset(self, idx) -> "TransactionTable":
        idx = np.asarray(idx)
        return TransactionTable(list(self.columns), self.values[idx], self.labels[idx],
                                self.row_ids[idx], 0, self.label_column)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.columns)
        df.insert(0, "row_id", self.row_ids)
        df[self.label_column] = self.labels
        return df


def load_csv(path: str | Path, label_column: str = LABEL_COLUMN) -> TransactionTable:
    """Read a header-first CSV; rows with non-numeric or non-finite cells are dropped.

    A ``row_id`` column, if present, is used as the row identity; otherwise
    rows are numbered by their position in the file.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    raw = pd.read_csv(path, comment="#", dtype=str)
    raw.columns = [c.strip() for c in raw.columns]
    if label_column not in raw.columns:
        raise DataError(f"{path}: missing label column {label_column!r}")
    if raw.empty:
        raise DataError(f"{path}: table has no rows")
    if "row_id" in raw.columns:
        ids = pd.to_numeric(raw.pop("row_id"), errors="coerce")
    else:
        ids = pd.Series(np.arange(len(raw)), index=raw.index)
    num = raw.apply(pd.to_numeric, errors="coerce")
    ok = np.isfinite(num.to_numpy(dtype=float)).all(axis=1) & np.isfinite(ids.to_numpy(dtype=float))
    ok &= num[label_column].isin([0, 1]).to_numpy()
    dropped = int((~ok).sum())
    if dropped:
        log.warning("%s: dropped %d malformed row(s)", path, dropped)
    num = num[ok]
    if num.empty:
        raise DataError(f"{path}: no valid rows")
    features = [c for c in num.columns if c != label_column]
    table = TransactionTable(
        features,
        num[features].to_numpy(dtype=float),
        num[label_column].to_numpy().astype(int),
        ids[ok].to_numpy().astype(int),
        dropped,
        label_column,
    )
    log.info("%s: %d rows, %d fraud", path, len(table), table.n_fraud)
    return table


class Scaled(NamedTuple):
    values: np.ndarray
    median: float
    iqr: float
    degenerate: bool


def robust_scale(values: Sequence[float]) -> Scaled:
    """``(x - median) / IQR`` with linearly interpolated quartiles.

    A zero IQR leaves the column median-centred and sets ``degenerate``.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DataError("cannot scale an empty column")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    iqr = q3 - q1
    if iqr == 0:
        return Scaled(x - med, float(med), 0.0, True)
    return Scaled((x - med) / iqr, float(med), float(iqr), False)


def pearson_correlation(feature: Sequence[float], label: Sequence[float]) -> tuple[float, bool]:
    """Pearson r and a flag that is True when r is undefined (reported as 0)."""
    x = np.asarray(feature, dtype=float)
    y = np.asarray(label, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise DataError("correlation needs two equal-length columns of length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
    if denom == 0:
        return 0.0, True
    return float(np.clip(np.dot(dx, dy) / denom, -1.0, 1.0)), False


@dataclass
class SelectionReport:
    correlations: dict[str, float]
    selected: list[str]
    undefined: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": len(self.selected),
            "selected": self.selected,
            "selected_correlations": {c: self.correlations[c] for c in self.selected},
            "correlations": self.correlations,
            "undefined_correlation": self.undefined,
        }


def scale_table(table: TransactionTable, columns: Sequence[str] | None = DEFAULT_SCALED_COLUMNS
                ) -> TransactionTable:
    """Robust-scale the named columns (all columns when ``columns`` is None)."""
    names = table.columns if columns is None else [c for c in columns if c in table.columns]
    values = table.values.copy()
    for name in names:
        j = table.columns.index(name)
        res = robust_scale(values[:, j])
        if res.degenerate:
            log.warning("column %s has zero IQR; only median-centred", name)
        values[:, j] = res.values
    return TransactionTable(list(table.columns), values, table.labels, table.row_ids,
                            table.dropped_rows, table.label_column)


def select_features(table: TransactionTable, k: int) -> tuple[SelectionReport, TransactionTable]:
    """Keep the ``k`` columns with the largest |r| against the label.

    Ties keep the original column order.  ``k`` must be a power of two so the
    reduced rows can be amplitude encoded.
    """
    if k < 2 or k & (k - 1):
        raise DataError(f"k={k} is not a power of two >= 2")
    if k > len(table.columns):
        raise DataError(f"k={k} exceeds the {len(table.columns)} available features")
    corr, undefined = {}, []
    for j, name in enumerate(table.columns):
        r, bad = pearson_correlation(table.values[:, j], table.labels)
        corr[name] = r
        if bad:
            undefined.append(name)
    order = sorted(range(len(table.columns)), key=lambda j: (-abs(corr[table.columns[j]]), j))
    keep = order[:k]
    selected = [table.columns[j] for j in keep]
    reduced = TransactionTable(selected, table.values[:, keep], table.labels, table.row_ids,
                               table.dropped_rows, table.label_column)
    return SelectionReport(corr, selected, undefined), reduced


def prepare(table: TransactionTable, k: int = 16, scale_all: bool = False
            ) -> tuple[SelectionReport, TransactionTable]:
    scaled = scale_table(table, None if scale_all else DEFAULT_SCALED_COLUMNS)
    return select_features(scaled, k)


@dataclass(frozen=True)
class SplitSpec:
    train_nonfraud_count: int | None = 2000
    test_nonfraud_count: int = 1000
    test_fraud_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraud_fraction <= 1:
            raise DataError("test_fraud_fraction must be in (0, 1]")
        if self.test_nonfraud_count < 0:
            raise DataError("test_nonfraud_count must be >= 0")
        if self.train_nonfraud_count is not None and self.train_nonfraud_count < 1:
            raise DataError("train_nonfraud_count must be >= 1 (or None for all)")


@dataclass(eq=False)
class Splits:
    train_nonfraud: TransactionTable
    test_nonfraud: TransactionTable
    test_fraud: TransactionTable


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def make_splits(table: TransactionTable, spec: SplitSpec) -> Splits:
    nonfraud = np.flatnonzero(table.labels == 0)
    fraud = np.flatnonzero(table.labels == 1)
    n_train = (len(nonfraud) - spec.test_nonfraud_count
               if spec.train_nonfraud_count is None else spec.train_nonfraud_count)
    if n_train < 1 or n_train + spec.test_nonfraud_count > len(nonfraud):
        raise DataError(
            f"need {n_train} train + {spec.test_nonfraud_count} test non-fraud rows, "
            f"table has {len(nonfraud)}"
        )
    n_fraud = round_half_up(spec.test_fraud_fraction * len(fraud))
    if n_fraud < 1:
        raise DataError("fraud test set would be empty")
    rng = np.random.default_rng(spec.seed)
    nonfraud = rng.permutation(nonfraud)
    fraud = rng.permutation(fraud)
    splits = Splits(
        table.subset(nonfraud[:n_train]),
        table.subset(nonfraud[n_train:n_train + spec.test_nonfraud_count]),
        table.subset(fraud[:n_fraud]),
    )
    if splits.train_nonfraud.n_fraud:
        raise DataError("fraud rows reached the training partition")
    return splits


def encode_table(table: TransactionTable) -> tuple[np.ndarray, np.ndarray]:
    """L2-normalised feature rows and a mask of the rows kept.

    Zero-norm rows cannot be encoded; they are dropped and counted.
    """
    norms = np.linalg.norm(table.values, axis=1)
    keep = norms > 0
    if not keep.all():
        log.warning("dropped %d zero-norm row(s) before encoding", int((~keep).sum()))
    if not keep.any():
        raise ZeroNormError("every row has zero norm")
    return l2_normalize(table.values[keep]), keep


# ---------------------------------------------------------------------------
# surrogate data

# Per-feature mean shift of the fraud class, loosely following the sign and
# ordering of the public card-fraud data.
_FRAUD_SHIFT = {
    "V1": -3.0, "V2": 2.6, "V3": -4.6, "V4": 3.6, "V5": -2.2, "V6": -1.1, "V7": -3.9,
    "V8": 0.4, "V9": -2.1, "V10": -4.4, "V11": 3.5, "V12": -4.8, "V14": -5.2,
    "V16": -3.1, "V17": -4.9, "V18": -1.8, "V19": 0.6, "V21": 0.5,
}
_PCA_STD = np.linspace(1.9, 0.35, 28)


def make_synthetic_transactions(n_nonfraud: int = 20000, n_fraud: int = 492, seed: int = 7,
                                rank: int = 5, noise: float = 0.35,
                                fraud_spread: float = 1.6, outlier_rate: float = 0.08,
                                outlier_noise: float = 3.0,
                                fraud_scale: tuple[float, float] = (0.3, 1.4)) -> pd.DataFrame:
    """Synthetic table shaped like the public card-fraud CSV.

    Columns ``Time, V1..V28, Amount, Class``.  Non-fraud V-columns are a
    rank-``rank`` linear mix plus isotropic noise (relative level ``noise``),
    with a fraction ``outlier_rate`` of rows whose noise is ``outlier_noise``
    times larger.  Fraud rows add a mean shift, scaled per row by a uniform
    draw from ``fraud_scale``, plus broader noise.
    """
    rng = np.random.default_rng(seed)
    names = [f"V{i}" for i in range(1, 29)]
    mix = rng.normal(size=(rank, 28))
    mix /= np.linalg.norm(mix, axis=0, keepdims=True)
    mix *= _PCA_STD

    z = rng.normal(size=(n_nonfraud, rank))
    level = np.where(rng.random(n_nonfraud) < outlier_rate, outlier_noise * noise, noise)
    v_nf = z @ mix + level[:, None] * _PCA_STD * rng.normal(size=(n_nonfraud, 28))
    shift = np.array([_FRAUD_SHIFT.get(n, 0.0) for n in names])
    zf = rng.normal(size=(n_fraud, rank))
    v_fr = shift * rng.uniform(*fraud_scale, size=(n_fraud, 1)) + 0.5 * zf @ mix \
        + fraud_spread * noise * _PCA_STD * rng.normal(size=(n_fraud, 28))

    v = np.vstack([v_nf, v_fr])
    labels = np.r_[np.zeros(n_nonfraud, int), np.ones(n_fraud, int)]
    time = rng.uniform(0, 172792, size=len(labels))
    amount = np.round(np.r_[rng.lognormal(3.0, 1.4, n_nonfraud), rng.lognormal(3.3, 1.9, n_fraud)], 2)
    order = rng.permutation(len(labels))
    df = pd.DataFrame(v[order], columns=names)
    df.insert(0, "Time", np.round(time[order]))
    df["Amount"] = amount[order]
    df[LABEL_COLUMN] = labels[order]
    return df
