import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fidqae import classify, io
from fidqae.classify import FRAUD, NON_FRAUD, FidelityRecord


def naive_metrics(scores, labels, tau):
    """Counting oracle written with plain loops and explicit branches."""
    tp = tn = fp = fn = 0
    for f, y in zip(scores, labels):
        says_fraud = not (f >= tau)
        if says_fraud and y == 1:
            tp += 1
        elif says_fraud:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    n = tp + tn + fp + fn

    def div(a, b):
        return a / b if b else 0.0

    prec, rec, spec = div(tp, tp + fp), div(tp, tp + fn), div(tn, tn + fp)
    f1 = div(2 * prec * rec, prec + rec)
    mcc = div(tp * tn - fp * fn, math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)))
    return dict(tp=tp, tn=tn, fp=fp, fn=fn, accuracy=(tp + tn) / n, precision=prec, recall=rec,
                specificity=spec, f1=f1, g_mean=math.sqrt(rec * spec), mcc=mcc)


def random_set(rng, n):
    labels = rng.integers(0, 2, n)
    scores = np.clip(rng.normal(0.7 - 0.4 * labels, 0.2), 0, 1)
    return np.round(scores, 2), labels


def test_classify_record_examples():
    assert classify.classify_record(0.9, 0.45) == NON_FRAUD
    assert classify.classify_record(0.45, 0.45) == NON_FRAUD
    assert classify.classify_record(0.2, 0.45) == FRAUD


def test_record_validation():
    with pytest.raises(ValueError):
        FidelityRecord(1.2, 0)
    with pytest.raises(ValueError):
        FidelityRecord(0.5, 2)


def test_perfect_separation():
    recs = [FidelityRecord(0.9, 0), FidelityRecord(0.8, 0), FidelityRecord(0.1, 1)]
    r = classify.compute_metrics(recs, 0.5)
    assert r.accuracy == r.precision == r.recall == r.f1 == r.mcc == 1.0
    assert r.degenerate == ()


def test_all_predicted_nonfraud_is_flagged():
    r = classify.compute_metrics(([0.9, 0.8], [0, 1]), 0.0)
    assert r.recall == 0 and r.mcc == 0
    assert "mcc" in r.degenerate and "precision" in r.degenerate


def test_empty_set_rejected():
    with pytest.raises(ValueError):
        classify.compute_metrics(([], []), 0.5)
    with pytest.raises(ValueError):
        classify.threshold_sweep(([0.5], [0]), [])
    with pytest.raises(ValueError):
        classify.threshold_sweep(([0.5], [0]), [1.5])


def test_matches_counting_oracle_on_1000_sets():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        scores, labels = random_set(rng, int(rng.integers(1, 60)))
        tau = float(rng.choice([0.0, 0.3, 0.45, 0.5, 0.51, 1.0]))
        got = classify.compute_metrics((scores, labels), tau)
        for key, value in naive_metrics(scores, labels, tau).items():
            assert getattr(got, key) == value, key


def test_report_invariants(rng):
    for _ in range(200):
        scores, labels = random_set(rng, 200)
        r = classify.compute_metrics((scores, labels), float(rng.uniform()))
        assert r.total == 200
        for k in ("accuracy", "precision", "recall", "specificity", "f1", "g_mean"):
            assert 0 <= getattr(r, k) <= 1
        assert -1 <= r.mcc <= 1
        assert abs(r.g_mean**2 - r.recall * r.specificity) < 1e-12


def test_sweep_order_and_monotonicity(rng):
    scores, labels = random_set(rng, 300)
    grid = np.linspace(0, 1, 21)
    reps = classify.threshold_sweep((scores, labels), grid)
    assert [r.threshold for r in reps] == list(grid)
    rec = [r.recall for r in reps]
    spec = [r.specificity for r in reps]
    assert all(a <= b for a, b in zip(rec, rec[1:]))
    assert all(a >= b for a, b in zip(spec, spec[1:]))
    assert reps[0].recall == 0


def test_default_grid():
    assert classify.DEFAULT_THRESHOLDS == (0.40, 0.45, 0.50, 0.55, 0.65)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_raising_threshold_never_unflags_fraud(f, t1, t2):
    lo, hi = sorted((t1, t2))
    if classify.classify_record(f, lo) == FRAUD:
        assert classify.classify_record(f, hi) == FRAUD


def test_mcc_properties(rng):
    for _ in range(100):
        n = int(rng.integers(4, 40))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            continue
        pred = rng.integers(0, 2, n)
        tp = int(np.sum((pred == 1) & (y == 1)))
        tn = int(np.sum((pred == 0) & (y == 0)))
        fp = int(np.sum((pred == 1) & (y == 0)))
        fn = int(np.sum((pred == 0) & (y == 1)))
        r = classify.metrics_from_counts(0.5, tp, tn, fp, fn)
        inv = classify.metrics_from_counts(0.5, fn, fp, tn, tp)
        assert (abs(r.mcc - 1) < 1e-12) == (fp == 0 and fn == 0)
        assert inv.mcc == pytest.approx(-r.mcc, abs=1e-12)


def test_best_report_ties_go_first():
    reps = classify.threshold_sweep(([0.9, 0.1], [0, 1]), [0.3, 0.5, 0.7])
    assert classify.best_report(reps).threshold == 0.3


# --- distributions -------------------------------------------------------------------


def test_identical_distributions(rng):
    x = rng.uniform(size=5000)
    s = classify.distribution_stats((np.r_[x, x], np.r_[np.zeros(5000), np.ones(5000)]))
    assert s.cohens_d == 0 and abs(s.overlap_coefficient - 1) <= 0.02


def test_point_masses():
    s = classify.distribution_stats(([0, 0, 1, 1], [1, 1, 0, 0]))
    assert s.overlap_coefficient == 0 and s.mean_nonfraud == 1 and s.mean_fraud == 0


def test_cohens_d_closed_form():
    a = np.array([0.6, 0.8, 1.0])
    b = np.array([0.1, 0.2, 0.3, 0.4])
    s = classify.distribution_stats((np.r_[a, b], np.r_[np.zeros(3), np.ones(4)]))
    pooled = math.sqrt((np.var(a) + np.var(b)) / 2)
    assert s.cohens_d == pytest.approx((a.mean() - b.mean()) / pooled, rel=1e-12)
    assert s.std_nonfraud == pytest.approx(np.sqrt(((a - 0.8) ** 2).mean()))


def test_overlap_symmetric(rng):
    a, b = rng.uniform(size=100), rng.beta(2, 5, size=80)
    s1 = classify.distribution_stats((np.r_[a, b], np.r_[np.zeros(100), np.ones(80)]))
    s2 = classify.distribution_stats((np.r_[b, a], np.r_[np.zeros(80), np.ones(100)]))
    assert s1.overlap_coefficient == pytest.approx(s2.overlap_coefficient, abs=1e-15)
    assert 0 <= s1.overlap_coefficient <= 1


def test_distribution_needs_both_classes():
    with pytest.raises(ValueError):
        classify.distribution_stats(([0.1, 0.2, 0.3], [0, 0, 1]))


# --- prevalence -------------------------------------------------------------------


def test_full_fraction_reproduces_sweep(rng):
    nf, fr = rng.uniform(0.4, 1, 50), rng.uniform(0, 0.6, 20)
    (block,) = classify.prevalence_sweep(nf, fr, [1.0])
    direct = classify.threshold_sweep((np.r_[nf, fr], np.r_[np.zeros(50), np.ones(20)]), classify.DEFAULT_THRESHOLDS)
    assert block.reports == direct and block.n_fraud == 20


def test_prevalence_sizes_and_determinism(rng):
    nf, fr = rng.uniform(0.4, 1, 50), rng.uniform(0, 0.6, 492)
    a = classify.prevalence_sweep(nf, fr, seed=3)
    b = classify.prevalence_sweep(nf, fr, seed=3)
    assert [x.n_fraud for x in a] == [98, 197, 295, 394]
    assert [x.reports for x in a] == [x.reports for x in b]
    assert all(len(x.reports) == 5 for x in a)


def test_prevalence_errors():
    with pytest.raises(ValueError):
        classify.prevalence_sweep([0.9], [0.1], [0.2])
    with pytest.raises(ValueError):
        classify.prevalence_sweep([0.9], [0.1], [1.5])


def test_writers(tmp_path):
    reps = classify.threshold_sweep(([0.9, 0.1, 0.5], [0, 1, 1]), [0.4, 0.6])
    classify.write_metrics_csv(tmp_path / "m.csv", reps, {"config_hash": "abc", "seed": 1})
    text = (tmp_path / "m.csv").read_text().splitlines()
    assert text[0] == "# config_hash=abc seed=1"
    assert text[1].split(",") == list(classify.METRIC_COLUMNS)
    rows = io.read_csv_rows(tmp_path / "m.csv")
    assert [float(r["threshold"]) for r in rows] == [0.4, 0.6]
    recs = [FidelityRecord(0.3, 1, "a")]
    classify.write_records_csv(tmp_path / "r.csv", recs)
    assert io.read_csv_rows(tmp_path / "r.csv") == [{"sample_id": "a", "fidelity": "0.3", "label": "1"}]
    blocks = classify.prevalence_sweep([0.9, 0.8], [0.1, 0.2, 0.3], [0.4, 1.0], [0.5])
    classify.write_prevalence_csv(tmp_path / "p.csv", blocks)
    assert len(io.read_csv_rows(tmp_path / "p.csv")) == 2
