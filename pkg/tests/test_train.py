import numpy as np
import pytest

from fidqae import io, model, train
from fidqae.model import CircuitLayout, EncodedSample, encode_sample
from fidqae.train import AdamState, FraudInTrainingError, TrainConfig

L4 = CircuitLayout()


def unit_rows(rng, n, dim=16):
    x = rng.normal(size=(n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def cluster(rng, index, n, spread=0.15):
    x = np.zeros((n, 16))
    x[:, index] = 1.0
    x += spread * rng.normal(size=(n, 16))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# --- config -------------------------------------------------------------------


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": 0.0},
                                {"gradient_mode": "adjoint"}, {"fidelity_mode": "noisy"}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_defaults():
    c = TrainConfig()
    assert (c.epochs, c.batch_size, c.learning_rate) == (100, 64, 0.001)
    assert (c.adam_beta1, c.adam_beta2, c.adam_eps) == (0.9, 0.999, 1e-8)


# --- cost -------------------------------------------------------------------


def test_cost_examples():
    zero = np.zeros(90)
    e0 = np.eye(16)[0]
    half = (np.eye(16)[0] + np.eye(16)[1]) / np.sqrt(2)
    assert train.cost(zero, e0[None], L4) == pytest.approx(0.0, abs=1e-15)
    assert train.cost(zero, np.array([e0, half]), L4) == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(ValueError):
        train.cost(zero, np.zeros((0, 16)), L4)


def test_cost_matches_recomputation(rng):
    theta = rng.normal(size=90)
    batch = [encode_sample(r) for r in unit_rows(rng, 7)]
    oracle = 1 - np.mean([model.trash_fidelity_exact(theta, s, L4) for s in batch])
    assert abs(train.cost(theta, batch, L4) - oracle) < 1e-12


def test_sampled_cost_is_seeded(rng):
    theta = rng.normal(size=90)
    x = unit_rows(rng, 5)
    a = train.cost(theta, x, L4, "sampled", 128, 4)
    assert a == train.cost(theta, x, L4, "sampled", 128, 4)
    assert abs(a - train.cost(theta, x, L4)) < 0.5


# --- gradients -------------------------------------------------------------------


def test_parameter_shift_matches_finite_difference(rng):
    for _ in range(20):
        theta = rng.uniform(-np.pi, np.pi, 90)
        x = unit_rows(rng, int(rng.integers(1, 6)))
        ps = train.gradient(theta, x, L4, "parameter_shift")
        fd = train.gradient(theta, x, L4, "finite_difference", h=1e-5)
        assert np.max(np.abs(ps - fd)) < 1e-5


def test_gradient_vanishes_at_perfect_compression():
    x = np.eye(16)[:1]
    g = train.gradient(np.zeros(90), x, L4)
    fd = train.finite_difference_gradient(np.zeros(90), x, L4)
    assert np.max(np.abs(g)) < 1e-10
    assert np.max(np.abs(fd)) < 1e-8


def test_gradient_periodicity(rng):
    theta = rng.normal(size=90)
    x = unit_rows(rng, 3)
    g1 = train.gradient(theta, x, L4)
    g2 = train.gradient(theta + 2 * np.pi, x, L4)
    assert np.max(np.abs(g1 - g2)) < 1e-10


def test_gradient_mode_errors(rng):
    x = unit_rows(rng, 2)
    with pytest.raises(ValueError):
        train.gradient(np.zeros(90), x, L4, "parameter_shift", "sampled")
    with pytest.raises(ValueError):
        train.gradient(np.zeros(90), x, L4, "backprop")
    with pytest.raises(ValueError):
        train.gradient(np.zeros(90), np.zeros((0, 16)), L4)


# --- Adam -------------------------------------------------------------------


def test_adam_first_step():
    g = np.zeros(90)
    g[0] = 1.0
    new, st = train.adam_step(np.zeros(90), g, AdamState.zeros(90), TrainConfig())
    # t=1: m_hat = g, v_hat = g^2, step = lr * 1 / (1 + eps)
    assert new[0] == pytest.approx(-0.001, abs=1e-6)
    assert np.all(new[1:] == 0) and st.t == 1


def test_adam_zero_gradient_decays_moments():
    st = AdamState(np.full(3, 0.5), np.full(3, 0.2), 4)
    theta = np.array([0.1, 0.2, 0.3])
    new, st2 = train.adam_step(theta, np.zeros(3), st, TrainConfig())
    np.testing.assert_allclose(st2.m, 0.45)
    np.testing.assert_allclose(st2.v, 0.2 * 0.999)
    # the decayed first moment still moves theta; only a zero history leaves it fixed
    same, _ = train.adam_step(theta, np.zeros(3), AdamState.zeros(3), TrainConfig())
    np.testing.assert_array_equal(same, theta)


def test_adam_matches_reference_loop(rng):
    cfg = TrainConfig(learning_rate=0.01)
    theta = rng.normal(size=5)
    ref = theta.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    st = AdamState.zeros(5)
    for t in range(1, 6):
        g = rng.normal(size=5)
        theta, st = train.adam_step(theta, g, st, cfg)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(theta, ref, atol=1e-14)


def test_adam_errors():
    with pytest.raises(ValueError):
        train.adam_step(np.zeros(2), np.array([np.inf, 0]), AdamState.zeros(2), TrainConfig())
    with pytest.raises(ValueError):
        train.adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), TrainConfig())


def test_init_params_range_and_seed():
    a = train.init_params(L4, 3)
    assert a.shape == (90,) and np.all(np.abs(a) <= 0.1)
    np.testing.assert_array_equal(a, train.init_params(L4, 3))


# --- training loop -------------------------------------------------------------------


def test_single_batch_epoch_is_one_adam_step(rng):
    x = unit_rows(rng, 10)
    cfg = TrainConfig(epochs=1, batch_size=64, seed=5)
    theta, hist = train.train_loop(cfg, x, x[:2], x[2:4], L4)
    theta0 = train.init_params(L4, 5)
    expect, _ = train.adam_step(theta0, train.gradient(theta0, x, L4), AdamState.zeros(90), cfg)
    np.testing.assert_allclose(theta, expect, atol=1e-14)
    assert len(hist) == 1
    assert hist.train_loss[0] == pytest.approx(train.cost(theta0, x, L4), abs=1e-14)


def test_training_separates_clusters(rng):
    normal = cluster(rng, 0, 64)
    # index 1 sets the trash (least significant) bit
    odd = cluster(rng, 1, 32)
    cfg = TrainConfig(epochs=50, batch_size=16, learning_rate=0.01, seed=0)
    theta, hist = train.train_loop(cfg, normal, normal[:32], odd, L4)
    gap = model.trash_fidelities(theta, normal, L4).mean() - model.trash_fidelities(theta, odd, L4).mean()
    assert gap >= 0.3
    assert np.mean(hist.train_loss[-10:]) <= np.mean(hist.train_loss[:10])


def test_history_invariants_and_determinism(rng):
    x = unit_rows(rng, 40)
    cfg = TrainConfig(epochs=3, batch_size=16, seed=2)
    t1, h1 = train.train_loop(cfg, x[:30], x[30:35], x[35:], L4)
    t2, h2 = train.train_loop(cfg, x[:30], x[30:35], x[35:], L4)
    np.testing.assert_array_equal(t1, t2)
    assert h1 == h2
    for row in h1.rows():
        _, loss, test_loss, f_train, f_nf, f_fr = row
        assert abs(loss + f_train - 1) < 1e-12 and abs(test_loss + f_nf - 1) < 1e-12
        assert all(0 <= f <= 1 for f in (f_train, f_nf, f_fr))


def test_fraud_in_training_rejected(rng):
    x = unit_rows(rng, 4)
    samples = [EncodedSample(r, model.amplitude_encode(r), lab) for r, lab in zip(x, [0, 0, 1, 0])]
    with pytest.raises(FraudInTrainingError):
        train.train_loop(TrainConfig(epochs=1), samples, x, x, L4)
    with pytest.raises(FraudInTrainingError):
        train.train_loop(TrainConfig(epochs=1), x, x, x, L4, train_labels=[0, 1, 0, 0])


def test_sampled_training_with_finite_differences(rng):
    x = unit_rows(rng, 8)
    cfg = TrainConfig(epochs=1, gradient_mode="finite_difference", fidelity_mode="sampled",
                      shots=64, fd_step=0.05)
    theta, hist = train.train_loop(cfg, x, x[:2], x[2:4], L4)
    assert np.all(np.isfinite(theta)) and len(hist) == 1


def test_param_and_history_files(tmp_path, rng):
    theta = rng.normal(size=90)
    train.save_params(tmp_path / "p.json", theta, L4, TrainConfig(), 100)
    back, lay, doc = train.load_params(tmp_path / "p.json")
    np.testing.assert_array_equal(back, theta)
    assert lay == L4 and doc["final_epoch"] == 100 and doc["config"]["batch_size"] == 64
    h = train.TrainHistory([0.5], [0.4], [0.5], [0.6], [0.3])
    train.write_history(tmp_path / "h.csv", h, {"seed": 0})
    rows = io.read_csv_rows(tmp_path / "h.csv")
    assert rows[0]["epoch"] == "1" and float(rows[0]["test_fraud_fidelity_mean"]) == 0.3
    assert (tmp_path / "h.csv").read_text().startswith("# seed=0")
