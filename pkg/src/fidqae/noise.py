"""Single-qubit Kraus noise on the autoencoder circuit and the robustness sweeps.

Noise acts on the data register while the ansatz runs; the SWAP-test
readout itself is ideal.  Where the channel is inserted is set by a
placement policy:

``per_gate``
    after every gate, on each qubit the gate touched;
``per_layer``
    after every two-qubit block of the ansatz, on every data qubit;
``final_only``
    once, on every data qubit, after the whole ansatz (the default).

Batched fidelities are computed in the Heisenberg picture: the trash
projector is pulled back through the adjoint noisy circuit once, giving an
effect operator ``E`` with ``F(x) = <x|E|x>``.  :func:`noisy_trash_fidelity`
evolves a single density matrix forwards instead and serves as the
reference for that shortcut.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import classify, io, qsim
from .model import (
    PARAMS_PER_PAIR,
    CircuitLayout,
    EncodedSample,
    check_params,
    pair_block,
    sampled_fidelities,
    trash_zero_mask,
)
from .qsim import GateOp, MixedState, PureState

CHANNELS = ("amplitude_damping", "phase_damping", "bit_flip", "phase_flip", "depolarizing")
PLACEMENTS = ("per_gate", "per_layer", "final_only")
# Per-gate insertion compounds over ~100 gates and wipes out the signal at
# moderate p, so the default applies each channel once after the ansatz.
DEFAULT_PLACEMENT = "final_only"
DEFAULT_P_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
DEFAULT_SHOT_GRID = (64, 128, 256, 512, 1024, 2048, 4096, 8192)
# Sweeps report the best F1 over this grid for every noise setting.
NOISE_THRESHOLDS = tuple(np.round(np.arange(0.01, 1.0, 0.01), 10))

SWEEP_COLUMNS = ("channel", "p", "shots", "threshold", "f1", "accuracy", "precision",
                 "recall", "specificity", "mcc")

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.diag([1.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class NoiseChannelSpec:
    kind: str
    p: float

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise ValueError(f"unknown noise channel {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"noise probability {self.p} outside [0, 1]")


def kraus_operators(spec: NoiseChannelSpec) -> list[np.ndarray]:
    """Kraus set of the channel; operators that vanish at this ``p`` are dropped.

    Depolarizing uses ``p`` as the total error probability, so ``p = 1``
    sends any qubit to ``I/2``.
    """
    p = spec.p
    if spec.kind == "bit_flip":
        ops = [math.sqrt(1 - p) * _I, math.sqrt(p) * _X]
    elif spec.kind == "phase_flip":
        ops = [math.sqrt(1 - p) * _I, math.sqrt(p) * _Z]
    elif spec.kind == "depolarizing":
        ops = [math.sqrt(1 - 3 * p / 4) * _I] + [math.sqrt(p / 4) * P for P in (_X, _Y, _Z)]
    elif spec.kind == "amplitude_damping":
        ops = [np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex),
               np.array([[0, math.sqrt(p)], [0, 0]], dtype=complex)]
    else:
        ops = [np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex),
               np.array([[0, 0], [0, math.sqrt(p)]], dtype=complex)]
    return [k for k in ops if np.any(k != 0)]


def _channel_array(rho: np.ndarray, kraus: Sequence[np.ndarray], m: int, q: int) -> np.ndarray:
    return sum(qsim.operator_1q_array(rho, m, q, k) for k in kraus)


def _adjoint_channel_array(effect: np.ndarray, kraus: Sequence[np.ndarray], m: int, q: int) -> np.ndarray:
    return sum(qsim.operator_1q_array(effect, m, q, k.conj().T) for k in kraus)


def apply_channel(rho: MixedState, spec: NoiseChannelSpec, qubit: int) -> MixedState:
    m = rho.num_qubits
    if not 0 <= qubit < m:
        raise qsim.QuantumStateError(f"qubit {qubit} out of range for {m} qubits")
    return MixedState(m, _channel_array(rho.matrix, kraus_operators(spec), m, qubit))


# ---------------------------------------------------------------------------
# noisy circuit


def noisy_schedule(theta, layout: CircuitLayout, placement: str = DEFAULT_PLACEMENT
                   ) -> Iterator[GateOp | int]:
    """Yield ansatz gates interleaved with qubit indices where noise acts."""
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    theta = check_params(theta, layout)
    every = range(layout.n_data)
    for block, (i, j) in enumerate(combinations(every, 2)):
        for gate in pair_block(i, j, theta[block * PARAMS_PER_PAIR:(block + 1) * PARAMS_PER_PAIR]):
            yield gate
            if placement == "per_gate":
                yield from gate.qubits
        if placement == "per_layer":
            yield from every
    if placement == "final_only":
        yield from every


def noisy_output_density(theta, sample, layout: CircuitLayout, spec: NoiseChannelSpec,
                         placement: str = DEFAULT_PLACEMENT) -> MixedState:
    state = sample.state if isinstance(sample, EncodedSample) else sample
    m = layout.n_data
    kraus = kraus_operators(spec)
    rho = state.density().matrix
    for op in noisy_schedule(theta, layout, placement):
        if isinstance(op, GateOp):
            rho = qsim.conjugate_array(rho, op, m)
        else:
            rho = _channel_array(rho, kraus, m, op)
    return MixedState(m, rho)


def noisy_trash_fidelity(theta, sample, layout: CircuitLayout, spec: NoiseChannelSpec,
                         placement: str = DEFAULT_PLACEMENT, shots: int | None = None,
                         seed: int = 0) -> float:
    """Trash fidelity after noisy evolution of one sample.

    Without ``shots`` the value is exact.  With ``shots`` the noisy data
    register is joined to the control and reference qubits, the SWAP test is
    run on the full density matrix and its Born distribution is sampled;
    the estimate ``2*P0 - 1`` is not clamped.
    """
    rho = noisy_output_density(theta, sample, layout, spec, placement)
    if shots is None:
        reduced = qsim.partial_trace(rho, list(layout.trash_qubits))
        return qsim.fidelity_pure_mixed(PureState.zero(layout.n_trash), reduced)
    anc = PureState.zero(1 + layout.n_trash).density().matrix
    full = MixedState(layout.total_qubits, np.kron(anc, rho.matrix))
    ctrl = layout.control_qubit
    off = layout.data_offset
    gates = [GateOp("H", (ctrl,))]
    gates += [GateOp("CSWAP", (ctrl, off + t, r))
              for t, r in zip(layout.trash_qubits, layout.reference_qubits)]
    gates.append(GateOp("H", (ctrl,)))
    for g in gates:
        full = qsim.apply_gate_mixed(full, g)
    hist = qsim.sample_counts_mixed(full, shots, seed)
    zeros = sum(c for bits, c in hist.counts.items() if bits[ctrl] == "0")
    return 2.0 * zeros / shots - 1.0


def noisy_effect_operator(theta, layout: CircuitLayout, spec: NoiseChannelSpec,
                          placement: str = DEFAULT_PLACEMENT) -> np.ndarray:
    """Heisenberg-picture effect ``E`` with ``F(x) = <x|E|x>`` for every input."""
    m = layout.n_data
    kraus = kraus_operators(spec)
    effect = np.diag(trash_zero_mask(layout).astype(complex))
    for op in reversed(list(noisy_schedule(theta, layout, placement))):
        if isinstance(op, GateOp):
            inv = op.inverse()
            half = qsim.apply_gate_array(effect, inv, m)
            effect = qsim.apply_gate_array(half.conj().T, inv, m).conj().T
        else:
            effect = _adjoint_channel_array(effect, kraus, m, op)
    return effect


def noisy_trash_fidelities(theta, states: np.ndarray, layout: CircuitLayout,
                           spec: NoiseChannelSpec, placement: str = DEFAULT_PLACEMENT) -> np.ndarray:
    effect = noisy_effect_operator(theta, layout, spec, placement)
    x = np.asarray(states, dtype=complex)
    f = np.real(np.einsum("ni,ij,nj->n", x.conj(), effect, x))
    if np.any(f < -qsim.NORM_TOL) or np.any(f > 1 + qsim.NORM_TOL):
        raise qsim.QuantumStateError("noisy fidelity outside [0, 1] beyond tolerance")
    return np.clip(f, 0.0, 1.0)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class NoiseSweepResult:
    kind: str
    p_grid: list[float]
    reports: list[classify.MetricsReport]
    shots: int | None = None
    placement: str = DEFAULT_PLACEMENT
    threshold_policy: str = "best_f1_over_grid"
    metadata: dict = field(default_factory=dict)

    @property
    def f1(self) -> list[float]:
        return [r.f1 for r in self.reports]


def _best(f: np.ndarray, labels: np.ndarray, thresholds) -> classify.MetricsReport:
    return classify.best_report(classify.threshold_sweep((f, labels), thresholds), "f1")


def _map(fn, items, threads: int | None):
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def noise_sweep(theta, layout: CircuitLayout, states: np.ndarray, labels: np.ndarray,
                kinds: Sequence[str] = CHANNELS, p_grid: Sequence[float] = DEFAULT_P_GRID,
                thresholds: Sequence[float] = NOISE_THRESHOLDS, placement: str = DEFAULT_PLACEMENT,
                threads: int | None = None) -> list[NoiseSweepResult]:
    """Best-threshold metrics for every (channel, p); output order follows the inputs."""
    if not kinds or not len(p_grid) or not len(thresholds):
        raise ValueError("noise sweep needs non-empty channel, p and threshold grids")
    labels = np.asarray(labels, dtype=int)
    cells = [(k, float(p)) for k in kinds for p in p_grid]

    def run(cell):
        kind, p = cell
        f = noisy_trash_fidelities(theta, states, layout, NoiseChannelSpec(kind, p), placement)
        return _best(f, labels, thresholds)

    reports = _map(run, cells, threads)
    n = len(p_grid)
    return [
        NoiseSweepResult(kind, [float(p) for p in p_grid], reports[i * n:(i + 1) * n],
                         None, placement)
        for i, kind in enumerate(kinds)
    ]


@dataclass(frozen=True)
class ShotsRow:
    kind: str
    p: float
    shots: int
    report: classify.MetricsReport


def shots_sweep(theta, layout: CircuitLayout, states: np.ndarray, labels: np.ndarray,
                kinds: Sequence[str] = CHANNELS, p: float = 0.5,
                shot_grid: Sequence[int] = DEFAULT_SHOT_GRID,
                thresholds: Sequence[float] = NOISE_THRESHOLDS, seed: int = 0,
                placement: str = DEFAULT_PLACEMENT, threads: int | None = None) -> list[ShotsRow]:
    """Shot-sampled fidelities at fixed ``p``; each cell draws from its own seeded stream."""
    if not len(shot_grid):
        raise ValueError("shot grid is empty")
    labels = np.asarray(labels, dtype=int)
    exact = {k: noisy_trash_fidelities(theta, states, layout, NoiseChannelSpec(k, p), placement)
             for k in kinds}
    cells = [(ki, k, int(s)) for ki, k in enumerate(kinds) for s in shot_grid]

    def run(cell):
        ki, kind, shots = cell
        rng = np.random.default_rng([seed, ki, shots])
        f = sampled_fidelities(exact[kind], shots, rng)
        return ShotsRow(kind, float(p), shots, _best(f, labels, thresholds))

    return _map(run, cells, threads)


def write_noise_csv(path: str | Path, results: Sequence[NoiseSweepResult], meta=None) -> None:
    rows = (
        [res.kind, p, "exact" if res.shots is None else res.shots, r.threshold, r.f1,
         r.accuracy, r.precision, r.recall, r.specificity, r.mcc]
        for res in results for p, r in zip(res.p_grid, res.reports)
    )
    io.write_csv(path, SWEEP_COLUMNS, rows, meta)


def write_shots_csv(path: str | Path, rows: Sequence[ShotsRow], meta=None) -> None:
    io.write_csv(path, SWEEP_COLUMNS, (
        [r.kind, r.p, r.shots, r.report.threshold, r.report.f1, r.report.accuracy,
         r.report.precision, r.report.recall, r.report.specificity, r.report.mcc]
        for r in rows
    ), meta)
