"""Autoencoder circuit: amplitude encoding, the pairwise ansatz and trash fidelity.

Register layout of the full SWAP-test circuit (``n_data + n_trash + 1``
qubits)::

    qubit 0                      control
    qubits 1 .. n_trash          reference, prepared in |0...0>
    qubits n_trash+1 .. end      data register (latent qubits first, trash last)

On its own, the data register is numbered 0 .. n_data-1 and the trash
qubits are the last ``n_trash`` of them.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from . import qsim
from .qsim import GateOp, PureState, QuantumStateError

MAX_DATA_QUBITS = 6
PARAMS_PER_PAIR = 15


class ZeroNormError(ValueError):
    """Raised when a feature row has zero norm and cannot be amplitude encoded."""


@dataclass(frozen=True)
class CircuitLayout:
    n_data: int = 4
    n_trash: int = 1

    def __post_init__(self):
        if not 2 <= self.n_data <= MAX_DATA_QUBITS:
            raise ValueError(f"n_data must be in [2, {MAX_DATA_QUBITS}], got {self.n_data}")
        if not 1 <= self.n_trash < self.n_data:
            raise ValueError(f"n_trash must satisfy 1 <= n_trash < n_data, got {self.n_trash}")

    @property
    def n_latent(self) -> int:
        return self.n_data - self.n_trash

    @property
    def dim(self) -> int:
        return 1 << self.n_data

    @property
    def n_params(self) -> int:
        return PARAMS_PER_PAIR * self.n_data * (self.n_data - 1) // 2

    @property
    def trash_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.n_latent, self.n_data))

    @property
    def total_qubits(self) -> int:
        return self.n_data + self.n_trash + 1

    @property
    def control_qubit(self) -> int:
        return 0

    @property
    def reference_qubits(self) -> tuple[int, ...]:
        return tuple(range(1, 1 + self.n_trash))

    @property
    def data_offset(self) -> int:
        return 1 + self.n_trash

    def to_dict(self) -> dict:
        return {"n_data": self.n_data, "n_trash": self.n_trash}


@dataclass(frozen=True, eq=False)
class EncodedSample:
    features: np.ndarray
    state: PureState
    label: int | None = None


def check_params(theta: np.ndarray | Sequence[float], layout: CircuitLayout) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != layout.n_params:
        raise ValueError(f"expected {layout.n_params} parameters, got {theta.shape[0]}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameters must be finite")
    return theta


def l2_normalize(raw: np.ndarray | Sequence[float]) -> np.ndarray:
    x = np.asarray(raw, dtype=float)
    n = x.shape[-1]
    if n < 2 or n & (n - 1):
        raise ValueError(f"feature length {n} is not a power of two")
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ZeroNormError("cannot normalize a zero-norm feature vector")
    return x / norm


def amplitude_encode(x: np.ndarray | Sequence[float]) -> PureState:
    x = np.asarray(x, dtype=float).reshape(-1)
    m = qsim._num_qubits_of(x.shape[0])
    if abs(np.linalg.norm(x) - 1.0) > qsim.NORM_TOL:
        raise ValueError("amplitude encoding needs a unit-norm vector")
    return PureState(m, x)


def encode_sample(raw: np.ndarray | Sequence[float], label: int | None = None) -> EncodedSample:
    x = l2_normalize(raw)
    return EncodedSample(x, amplitude_encode(x), label)


# ---------------------------------------------------------------------------
# ansatz


def _euler(q: int, angles: Iterable[float]) -> list[GateOp]:
    a, b, c = angles
    return [GateOp("RZ", (q,), a), GateOp("RY", (q,), b), GateOp("RZ", (q,), c)]


def pair_block(i: int, j: int, t: Sequence[float]) -> list[GateOp]:
    """Fifteen-angle two-qubit block on qubits ``i < j``.

    Local Euler layer, CNOT, middle rotations, CNOT, RY, closing Euler layer.
    Both CNOTs point i -> j so the block is the identity at zero angles.
    """
    return [
        *_euler(i, t[0:3]),
        *_euler(j, t[3:6]),
        GateOp("CNOT", (i, j)),
        GateOp("RZ", (i,), t[6]),
        GateOp("RY", (j,), t[7]),
        GateOp("CNOT", (i, j)),
        GateOp("RY", (j,), t[8]),
        *_euler(i, t[9:12]),
        *_euler(j, t[12:15]),
    ]


def build_ansatz(theta, layout: CircuitLayout, offset: int = 0) -> list[GateOp]:
    """Gate list of U(theta) on data qubits ``offset .. offset+n_data-1``.

    Pairs are visited in lexicographic order and the k-th rotation gate in
    the returned list consumes ``theta[k]``.
    """
    theta = check_params(theta, layout)
    gates: list[GateOp] = []
    for block, (i, j) in enumerate(combinations(range(layout.n_data), 2)):
        t = theta[block * PARAMS_PER_PAIR:(block + 1) * PARAMS_PER_PAIR]
        gates.extend(pair_block(i + offset, j + offset, t))
    return gates


def ansatz_unitary(theta, layout: CircuitLayout) -> np.ndarray:
    eye = np.eye(layout.dim, dtype=complex)
    return qsim.apply_gates_array(eye, build_ansatz(theta, layout), layout.n_data)


def trash_zero_mask(layout: CircuitLayout) -> np.ndarray:
    """Boolean mask of data-register basis states whose trash bits are all 0."""
    return (np.arange(layout.dim) % (1 << layout.n_trash)) == 0


# ---------------------------------------------------------------------------
# fidelity


def trash_fidelity_exact(theta, sample: EncodedSample | PureState, layout: CircuitLayout) -> float:
    state = sample.state if isinstance(sample, EncodedSample) else sample
    if state.num_qubits != layout.n_data:
        raise QuantumStateError(
            f"sample has {state.num_qubits} qubits, layout expects {layout.n_data}"
        )
    out = qsim.apply_gates(state, build_ansatz(theta, layout))
    rho_trash = qsim.partial_trace(out, list(layout.trash_qubits))
    return qsim.fidelity_pure_mixed(PureState.zero(layout.n_trash), rho_trash)


def trash_fidelities(theta, states: np.ndarray, layout: CircuitLayout) -> np.ndarray:
    """Vectorised trash fidelity for rows of ``states`` (shape ``(N, 2**n_data)``).

    Equivalent to calling :func:`trash_fidelity_exact` per row.
    """
    states = np.asarray(states)
    if states.ndim != 2 or states.shape[1] != layout.dim:
        raise ValueError(f"states must have shape (N, {layout.dim}), got {states.shape}")
    u = ansatz_unitary(theta, layout)
    out = u[trash_zero_mask(layout)] @ states.T
    f = np.sum(np.abs(out) ** 2, axis=0)
    if np.any(f > 1 + qsim.NORM_TOL):
        raise QuantumStateError("fidelity above 1 beyond tolerance")
    return np.clip(f, 0.0, 1.0)


def build_swap_test_circuit(theta, sample, layout: CircuitLayout) -> list[GateOp]:
    """Ansatz on the data register followed by the H-CSWAP-H sandwich.

    The reference register needs no gates: it starts in |0...0>.  ``sample``
    is not used to build gates (state preparation is done by
    :func:`swap_test_input_state`) but is accepted so callers pass the same
    triple everywhere.
    """
    off = layout.data_offset
    trash = [off + q for q in layout.trash_qubits]
    refs = list(layout.reference_qubits)
    ctrl = layout.control_qubit
    if set(trash) & set(refs) or ctrl in trash or ctrl in refs:
        raise ValueError("register overlap in circuit layout")
    gates = build_ansatz(theta, layout, offset=off)
    gates.append(GateOp("H", (ctrl,)))
    gates.extend(GateOp("CSWAP", (ctrl, t, r)) for t, r in zip(trash, refs))
    gates.append(GateOp("H", (ctrl,)))
    return gates


def swap_test_input_state(sample: EncodedSample | PureState, layout: CircuitLayout) -> PureState:
    state = sample.state if isinstance(sample, EncodedSample) else sample
    return PureState.zero(1 + layout.n_trash).tensor(state)


def swap_test_output_state(theta, sample, layout: CircuitLayout) -> PureState:
    return qsim.apply_gates(
        swap_test_input_state(sample, layout), build_swap_test_circuit(theta, sample, layout)
    )


def swap_test_probability_exact(theta, sample, layout: CircuitLayout) -> float:
    out = swap_test_output_state(theta, sample, layout)
    return qsim.measure_probability_zero(out, layout.control_qubit)


def swap_test_fidelity_sampled(theta, sample, layout: CircuitLayout, shots: int, seed: int) -> float:
    """Shot estimate ``2*P0 - 1`` of the trash fidelity.

    Not clamped: with few shots the estimate can fall slightly below 0.
    """
    out = swap_test_output_state(theta, sample, layout)
    hist = qsim.sample_counts(out, shots, seed)
    zeros = sum(c for bits, c in hist.counts.items() if bits[layout.control_qubit] == "0")
    return 2.0 * zeros / shots - 1.0


def sampled_fidelities(f_exact, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Shot estimates ``2*k/shots - 1`` with ``k ~ Binomial(shots, (1+F)/2)``.

    The control-qubit zero count of the SWAP test is binomial with
    ``P0 = (1 + F)/2``, so this has the same law as sampling the full circuit
    and marginalising, without building the larger state.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p0 = np.clip(0.5 + 0.5 * np.asarray(f_exact, dtype=float), 0.0, 1.0)
    return 2.0 * rng.binomial(shots, p0) / shots - 1.0
