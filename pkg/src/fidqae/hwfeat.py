"""Fidelity/entropy features from measurement counts and a logistic classifier.

Counts files are JSON arrays of ``{"job_id": str, "label": 0|1,
"counts": {bitstring: int}}``.  The fidelity feature is the empirical
probability of a reference bitstring, the entropy feature the Shannon
entropy (bits) of the outcome distribution.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import classify, io, qsim
from .model import CircuitLayout, build_swap_test_circuit
from .noise import DEFAULT_PLACEMENT, NoiseChannelSpec, noisy_output_density
from .qsim import CountsHistogram, MixedState, PureState

LOGISTIC_STEP = 0.1
LOGISTIC_ITERATIONS = 5000


class CountsFileError(ValueError):
    """The counts file cannot be used (bad JSON, no jobs, a class missing)."""


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    counts: CountsHistogram
    label: int

    def __post_init__(self):
        if self.counts.total_shots < 1:
            raise CountsFileError(f"job {self.job_id}: empty counts")
        if self.label not in (0, 1):
            raise CountsFileError(f"job {self.job_id}: label must be 0 or 1")

    def to_dict(self) -> dict:
        return {"job_id": self.job_id, "label": self.label, "counts": dict(self.counts.counts)}


def fidelity_feature(counts: CountsHistogram, reference: str) -> float:
    if len(reference) != counts.num_qubits:
        raise ValueError(
            f"reference {reference!r} has {len(reference)} bits, counts have {counts.num_qubits}"
        )
    return counts.counts.get(reference, 0) / counts.total_shots


def entropy_feature(counts: CountsHistogram) -> float:
    c = np.array([v for v in counts.counts.values() if v > 0], dtype=float)
    p = c / counts.total_shots
    return float(max(0.0, -np.sum(p * np.log2(p))))


def extract_features(records: Sequence[JobRecord], reference: str | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """``(N, 2)`` array of (fidelity, entropy) and the label vector.

    The default reference is the all-zeros bitstring.
    """
    feats = []
    for r in records:
        ref = reference if reference is not None else "0" * r.counts.num_qubits
        feats.append((fidelity_feature(r.counts, ref), entropy_feature(r.counts)))
    return np.array(feats, dtype=float).reshape(-1, 2), np.array([r.label for r in records], dtype=int)


# ---------------------------------------------------------------------------
# logistic regression


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    threshold: float = 0.5
    youden_j: float = float("nan")
    metadata: dict = field(default_factory=dict)

    def scores(self, features: np.ndarray) -> np.ndarray:
        return _sigmoid(np.asarray(features, dtype=float) @ self.weights + self.bias)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.scores(features) >= self.threshold).astype(int)

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "threshold": float(self.threshold),
            "youden_j": float(self.youden_j),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.asarray(d["weights"], dtype=float), float(d["bias"]), float(d["threshold"]),
                   float(d.get("youden_j", float("nan"))), dict(d.get("metadata", {})))


def _log_likelihood(z: np.ndarray, y: np.ndarray) -> float:
    # log sigma(z) = -logaddexp(0, -z)
    return float(-np.mean(y * np.logaddexp(0, -z) + (1 - y) * np.logaddexp(0, z)))


def fit_logistic(features, labels, step: float = LOGISTIC_STEP,
                 iterations: int = LOGISTIC_ITERATIONS) -> LogisticModel:
    """Full-batch gradient ascent on the mean log-likelihood.

    Features are standardised internally; the returned weights act on the
    raw features.  The per-iteration log-likelihood is kept in
    ``metadata["log_likelihood"]`` (every 50th value plus the last).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("features must be (N, d) with one label per row")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    if len(x) < 4:
        raise ValueError("need at least 4 records to fit")
    missing = [classify.LABEL_NAMES[c] for c in (0, 1) if not np.any(y == c)]
    if missing:
        raise ValueError(f"single-class input: no {missing[0]} records")

    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    xs = (x - mu) / sd
    w = np.zeros(x.shape[1])
    b = 0.0
    trace = []
    for it in range(iterations):
        z = xs @ w + b
        if it % 50 == 0:
            trace.append(_log_likelihood(z, y))
        resid = y - _sigmoid(z)
        w = w + step * xs.T @ resid / len(y)
        b = b + step * resid.mean()
    trace.append(_log_likelihood(xs @ w + b, y))

    weights = w / sd
    bias = b - float(np.dot(w, mu / sd))
    return LogisticModel(weights, bias, 0.5, float("nan"), {
        "step": step, "iterations": iterations, "log_likelihood": trace,
        "standardized_weights": w.tolist(), "standardized_bias": b,
    })


def youden_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """Candidate thresholds (sorted) and J = TPR - FPR at each; positive iff score >= t."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    n_pos, n_neg = int(np.sum(y == 1)), int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        missing = "fraud" if n_pos == 0 else "non-fraud"
        raise ValueError(f"Youden threshold needs both classes; no {missing} records")
    u = np.unique(s)
    cand = np.unique(np.r_[0.0, 1.0, (u[1:] + u[:-1]) / 2])
    pos = s[y == 1]
    neg = s[y == 0]
    tpr = (pos[None, :] >= cand[:, None]).sum(axis=1) / n_pos
    fpr = (neg[None, :] >= cand[:, None]).sum(axis=1) / n_neg
    return cand, tpr - fpr


def youden_threshold(scores, labels) -> tuple[float, float]:
    """Return ``(tau, J)`` maximising Youden's J; ties go to the smallest tau."""
    cand, j = youden_curve(scores, labels)
    best = int(np.argmax(j))
    return float(cand[best]), float(j[best])


def fit_classifier(records: Sequence[JobRecord], reference: str | None = None,
                   **kw) -> LogisticModel:
    x, y = extract_features(records, reference)
    model = fit_logistic(x, y, **kw)
    model.threshold, model.youden_j = youden_threshold(model.scores(x), y)
    model.metadata["reference"] = reference
    return model


def evaluate_jobs(records: Sequence[JobRecord], model: LogisticModel,
                  reference: str | None = None) -> classify.MetricsReport:
    """Fraud iff the logistic score reaches the fitted threshold."""
    if not records:
        raise CountsFileError("no jobs")
    ref = reference if reference is not None else model.metadata.get("reference")
    x, y = extract_features(records, ref)
    pred = model.predict(x)
    tp = int(np.sum((pred == 1) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    return classify.metrics_from_counts(model.threshold, tp, tn, fp, fn)


def split_holdout(records: Sequence[JobRecord], fraction: float = 0.5, seed: int = 0
                  ) -> tuple[list[JobRecord], list[JobRecord]]:
    """Stratified split into (fit, held-out) lists."""
    rng = np.random.default_rng(seed)
    fit, held = [], []
    for label in (0, 1):
        idx = [i for i, r in enumerate(records) if r.label == label]
        idx = list(rng.permutation(idx))
        cut = int(math.floor(len(idx) * (1 - fraction) + 0.5))
        fit += [records[i] for i in idx[:cut]]
        held += [records[i] for i in idx[cut:]]
    return fit, held


# ---------------------------------------------------------------------------
# files


def load_counts_json(path: str | Path) -> list[JobRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CountsFileError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines() or [""]
        line = lines[min(exc.lineno, len(lines)) - 1]
        raise CountsFileError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}: {line.strip()!r}"
        ) from exc
    if not isinstance(doc, list):
        raise CountsFileError(f"{path}: expected a JSON array of jobs")
    if not doc:
        raise CountsFileError("no jobs")
    records = []
    for i, job in enumerate(doc):
        try:
            counts = {str(k): int(v) for k, v in job["counts"].items()}
            if not counts:
                raise CountsFileError(f"job {i}: empty counts")
            nq = len(next(iter(counts)))
            records.append(JobRecord(str(job["job_id"]), CountsHistogram(nq, counts), int(job["label"])))
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise CountsFileError(f"{path}: job #{i} is malformed: {exc}") from exc
    labels = {r.label for r in records}
    for c in (0, 1):
        if c not in labels:
            raise CountsFileError(f"{path}: single-class file, no {classify.LABEL_NAMES[c]} jobs")
    return records


def write_counts_json(path: str | Path, records: Sequence[JobRecord]) -> None:
    io.write_json(path, [r.to_dict() for r in records])


def make_synthetic_jobs(theta, layout: CircuitLayout, states: np.ndarray, labels: Sequence[int],
                        spec: NoiseChannelSpec, placement: str = DEFAULT_PLACEMENT,
                        shots: int = 1024, seed: int = 0) -> list[JobRecord]:
    """Counts over every qubit of the noisy SWAP-test circuit, one job per state.

    The data register goes through the noisy ansatz, then an ideal
    H-CSWAP-H readout; all ``n_data + n_trash + 1`` qubits are sampled.
    """
    readout = build_swap_test_circuit(theta, None, layout)[-(layout.n_trash + 2):]
    anc = PureState.zero(1 + layout.n_trash).density().matrix
    records = []
    for i, (x, label) in enumerate(zip(states, labels)):
        rho = noisy_output_density(theta, PureState(layout.n_data, x), layout, spec, placement)
        full = MixedState(layout.total_qubits, np.kron(anc, rho.matrix))
        for g in readout:
            full = qsim.apply_gate_mixed(full, g)
        hist = qsim.sample_counts_mixed(full, shots, int(np.random.default_rng([seed, i]).integers(2**31)))
        records.append(JobRecord(f"job-{i:05d}", hist, int(label)))
    return records
