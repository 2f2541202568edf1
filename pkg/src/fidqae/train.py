"""Fidelity cost, gradients, Adam and the training loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io, qsim
from .model import (
    CircuitLayout,
    EncodedSample,
    build_ansatz,
    check_params,
    sampled_fidelities,
    trash_fidelities,
    trash_zero_mask,
)
from .qsim import GateOp

log = logging.getLogger(__name__)

SHIFT = np.pi / 2


class FraudInTrainingError(ValueError):
    """A fraud-labelled row reached the training partition."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    gradient_mode: str = "parameter_shift"
    fidelity_mode: str = "exact"
    shots: int = 1024
    fd_step: float = 1e-5
    init_scale: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.gradient_mode not in ("parameter_shift", "finite_difference"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")
        if self.fidelity_mode not in ("exact", "sampled"):
            raise ValueError(f"unknown fidelity_mode {self.fidelity_mode!r}")
        if self.fidelity_mode == "sampled" and self.shots < 1:
            raise ValueError("sampled fidelity mode needs shots >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    train_fidelity_mean: list[float] = field(default_factory=list)
    test_nonfraud_fidelity_mean: list[float] = field(default_factory=list)
    test_fraud_fidelity_mean: list[float] = field(default_factory=list)

    COLUMNS = (
        "epoch",
        "train_loss",
        "test_loss",
        "train_fidelity_mean",
        "test_nonfraud_fidelity_mean",
        "test_fraud_fidelity_mean",
    )

    def __len__(self) -> int:
        return len(self.train_loss)

    def rows(self):
        for e in range(len(self)):
            yield (
                e + 1,
                self.train_loss[e],
                self.test_loss[e],
                self.train_fidelity_mean[e],
                self.test_nonfraud_fidelity_mean[e],
                self.test_fraud_fidelity_mean[e],
            )


def as_batch(samples) -> tuple[np.ndarray, np.ndarray | None]:
    """Accept an ``(N, dim)`` array or a list of EncodedSample."""
    if isinstance(samples, np.ndarray):
        return samples, None
    samples = list(samples)
    if samples and isinstance(samples[0], EncodedSample):
        states = np.stack([s.state.amplitudes for s in samples])
        labels = np.array([-1 if s.label is None else s.label for s in samples])
        return states, labels
    return np.asarray(samples), None


def cost(theta, batch, layout: CircuitLayout, fidelity_mode: str = "exact",
         shots: int | None = None, seed: int = 0) -> float:
    states, _ = as_batch(batch)
    if len(states) == 0:
        raise ValueError("cost of an empty batch is undefined")
    f = trash_fidelities(theta, states, layout)
    if fidelity_mode == "sampled":
        f = sampled_fidelities(f, shots or 1024, np.random.default_rng(seed))
    elif fidelity_mode != "exact":
        raise ValueError(f"unknown fidelity_mode {fidelity_mode!r}")
    return float(np.mean(1.0 - f))


def _mean_expectation(states: np.ndarray, effect: np.ndarray) -> float:
    """Mean of ``<x|E|x>`` over the columns of ``states``."""
    return np.vdot(states, effect @ states).real / states.shape[1]


def parameter_shift_gradient(theta, states: np.ndarray, layout: CircuitLayout) -> np.ndarray:
    """Exact gradient of the mean ``1 - F`` via the pi/2 shift rule.

    Each shifted circuit is evaluated by splitting it at the shifted gate:
    the states before the gate come from one forward sweep and the rest of
    the circuit is folded into an effect operator ``S^dag P S`` swept
    backwards, so the 2*P shifted evaluations cost O(gates) in total.
    """
    theta = check_params(theta, layout)
    m = layout.n_data
    gates = build_ansatz(theta, layout)
    psi = np.asarray(states, dtype=complex).T
    after = []
    for g in gates:
        psi = qsim.apply_gate_array(psi, g, m)
        after.append(psi)

    effect = np.diag(trash_zero_mask(layout).astype(complex))
    grad = np.zeros(layout.n_params)
    k = layout.n_params
    for g, psi_after in zip(reversed(gates), reversed(after)):
        if g.is_rotation:
            k -= 1
            # R(theta +- s) = R(+-s) R(theta)
            plus = qsim.apply_gate_array(psi_after, GateOp(g.kind, g.qubits, SHIFT), m)
            minus = qsim.apply_gate_array(psi_after, GateOp(g.kind, g.qubits, -SHIFT), m)
            df = _mean_expectation(plus, effect) - _mean_expectation(minus, effect)
            grad[k] = -0.5 * df
        inv = g.inverse()
        half = qsim.apply_gate_array(effect, inv, m)
        effect = qsim.apply_gate_array(half.conj().T, inv, m).conj().T
    return grad


def finite_difference_gradient(theta, batch, layout: CircuitLayout, h: float = 1e-5,
                               fidelity_mode: str = "exact", shots: int | None = None,
                               seed: int = 0) -> np.ndarray:
    theta = check_params(theta, layout)
    grad = np.empty_like(theta)
    for k in range(theta.shape[0]):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        grad[k] = (cost(tp, batch, layout, fidelity_mode, shots, seed)
                   - cost(tm, batch, layout, fidelity_mode, shots, seed)) / (2 * h)
    return grad


def gradient(theta, batch, layout: CircuitLayout, mode: str = "parameter_shift",
             fidelity_mode: str = "exact", **kw) -> np.ndarray:
    states, _ = as_batch(batch)
    if len(states) == 0:
        raise ValueError("gradient of an empty batch is undefined")
    if mode == "parameter_shift":
        if fidelity_mode != "exact":
            raise ValueError("parameter_shift gradients require the exact fidelity mode")
        return parameter_shift_gradient(theta, states, layout)
    if mode == "finite_difference":
        return finite_difference_gradient(theta, states, layout, fidelity_mode=fidelity_mode, **kw)
    raise ValueError(f"unknown gradient mode {mode!r}")


def adam_step(theta, grad, state: AdamState, config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("parameter, gradient and moment lengths differ")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient entries")
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * grad**2
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new, AdamState(m, v, t)


def init_params(layout: CircuitLayout, seed: int, scale: float = 0.1) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-scale, scale, layout.n_params)


def _check_no_fraud(labels) -> None:
    if labels is not None and np.any(np.asarray(labels) == 1):
        raise FraudInTrainingError(
            f"{int(np.sum(np.asarray(labels) == 1))} fraud rows found in the training set"
        )


def train_loop(config: TrainConfig, train_nonfraud, test_nonfraud, test_fraud,
               layout: CircuitLayout, train_labels: Sequence[int] | None = None,
               theta0: np.ndarray | None = None) -> tuple[np.ndarray, TrainHistory]:
    """Train on non-fraud rows only; test sets are evaluated every epoch.

    The fraud test set never enters a gradient.  Train-loss entries are the
    sample-weighted mean of the per-batch losses seen during the epoch.
    """
    train, labels = as_batch(train_nonfraud)
    _check_no_fraud(labels if train_labels is None else train_labels)
    test_nf, _ = as_batch(test_nonfraud)
    test_fr, _ = as_batch(test_fraud)
    if len(train) == 0:
        raise ValueError("empty training set")

    rng = np.random.default_rng(config.seed)
    theta = init_params(layout, config.seed, config.init_scale) if theta0 is None else check_params(theta0, layout)
    adam = AdamState.zeros(layout.n_params)
    hist = TrainHistory()
    sample_rng = np.random.default_rng([config.seed, 1])

    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        loss_sum = 0.0
        for start in range(0, len(train), config.batch_size):
            batch = train[order[start:start + config.batch_size]]
            if config.fidelity_mode == "exact":
                loss = cost(theta, batch, layout)
                grad = gradient(theta, batch, layout, config.gradient_mode, h=config.fd_step)
            else:
                seed = int(sample_rng.integers(2**31))
                loss = cost(theta, batch, layout, "sampled", config.shots, seed)
                grad = gradient(theta, batch, layout, config.gradient_mode, "sampled",
                                h=config.fd_step, shots=config.shots, seed=seed)
            loss_sum += loss * len(batch)
            theta, adam = adam_step(theta, grad, adam, config)
        train_loss = loss_sum / len(train)
        f_nf = float(trash_fidelities(theta, test_nf, layout).mean()) if len(test_nf) else float("nan")
        f_fr = float(trash_fidelities(theta, test_fr, layout).mean()) if len(test_fr) else float("nan")
        hist.train_loss.append(train_loss)
        hist.train_fidelity_mean.append(1.0 - train_loss)
        hist.test_loss.append(1.0 - f_nf)
        hist.test_nonfraud_fidelity_mean.append(f_nf)
        hist.test_fraud_fidelity_mean.append(f_fr)
        log.info("epoch %d: train_loss=%.4f test_nf=%.4f test_fraud=%.4f",
                 epoch + 1, train_loss, f_nf, f_fr)
    return theta, hist


# ---------------------------------------------------------------------------
# persistence


def save_params(path: str | Path, theta, layout: CircuitLayout, config: TrainConfig | dict,
                final_epoch: int) -> None:
    cfg = config.to_dict() if isinstance(config, TrainConfig) else dict(config)
    io.write_json(path, {
        "layout": layout.to_dict(),
        "theta": [float(t) for t in theta],
        "config": cfg,
        "final_epoch": int(final_epoch),
    })


def load_params(path: str | Path) -> tuple[np.ndarray, CircuitLayout, dict]:
    doc = io.read_json(path)
    layout = CircuitLayout(**doc["layout"])
    theta = check_params(doc["theta"], layout)
    return theta, layout, doc


def write_history(path: str | Path, hist: TrainHistory, meta: dict | None = None) -> None:
    io.write_csv(path, TrainHistory.COLUMNS, hist.rows(), meta)
