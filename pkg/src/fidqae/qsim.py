"""Small exact simulator for statevectors and density matrices.

Basis convention used everywhere in the package: qubit 0 is the most
significant bit of the basis index, so for two qubits ``|q0 q1>`` sits at
index ``2*q0 + q1``.

Rotations follow ``R_P(theta) = exp(-i theta P / 2)``.

Gate kernels work on arrays whose leading axis has length ``2**m``; any
trailing axes are treated as a batch.  This lets the same kernel act on a
single state, a stack of states, or the columns of a density matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_QUBITS = 12
NORM_TOL = 1e-9

ROTATIONS = ("RX", "RY", "RZ")
GATE_ARITY = {"RX": 1, "RY": 1, "RZ": 1, "H": 1, "X": 1, "CNOT": 2, "CSWAP": 3}

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


class QuantumStateError(ValueError):
    """Raised for malformed states or invalid gate/qubit arguments."""


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise QuantumStateError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(qubits) != GATE_ARITY[self.kind]:
            raise QuantumStateError(
                f"{self.kind} takes {GATE_ARITY[self.kind]} qubit(s), got {len(qubits)}"
            )
        if len(set(qubits)) != len(qubits):
            raise QuantumStateError(f"duplicate qubit indices in {self.kind}{qubits}")
        if any(q < 0 for q in qubits):
            raise QuantumStateError(f"negative qubit index in {self.kind}{qubits}")

    @property
    def is_rotation(self) -> bool:
        return self.kind in ROTATIONS

    def inverse(self) -> "GateOp":
        if self.is_rotation:
            return GateOp(self.kind, self.qubits, -self.angle)
        return self

    def check(self, num_qubits: int) -> None:
        bad = [q for q in self.qubits if q >= num_qubits]
        if bad:
            raise QuantumStateError(
                f"qubit index {bad[0]} out of range for {num_qubits}-qubit state"
            )


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=complex)
    raise QuantumStateError(f"{kind} is not a rotation")


def single_qubit_matrix(gate: GateOp) -> np.ndarray:
    if gate.is_rotation:
        return rotation_matrix(gate.kind, gate.angle)
    if gate.kind == "H":
        return _H
    if gate.kind == "X":
        return _X
    raise QuantumStateError(f"{gate.kind} is not a single-qubit gate")


def _check_num_qubits(m: int) -> None:
    if not 1 <= m <= MAX_QUBITS:
        raise QuantumStateError(f"num_qubits must be in [1, {MAX_QUBITS}], got {m}")


def _num_qubits_of(dim: int) -> int:
    m = int(dim).bit_length() - 1
    if dim < 2 or (1 << m) != dim:
        raise QuantumStateError(f"dimension {dim} is not a power of two >= 2")
    _check_num_qubits(m)
    return m


@dataclass(frozen=True, eq=False)
class PureState:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != 1 << self.num_qubits:
            raise QuantumStateError(
                f"expected {1 << self.num_qubits} amplitudes, got {amps.shape[0]}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise QuantumStateError(f"state norm {norm!r} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "PureState":
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def from_bitstring(cls, bits: str) -> "PureState":
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(len(bits), amps)

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(self.num_qubits + other.num_qubits, np.kron(self.amplitudes, other.amplitudes))

    def density(self) -> "MixedState":
        return MixedState(self.num_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class MixedState:
    num_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        _check_num_qubits(self.num_qubits)
        rho = np.array(self.matrix, dtype=complex)
        dim = 1 << self.num_qubits
        if rho.shape != (dim, dim):
            raise QuantumStateError(f"expected a {dim}x{dim} matrix, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > NORM_TOL:
            raise QuantumStateError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > NORM_TOL:
            raise QuantumStateError(f"density matrix trace {tr!r} differs from 1")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "MixedState":
        dim = 1 << num_qubits
        return cls(num_qubits, np.eye(dim, dtype=complex) / dim)

    def check_psd(self, tol: float = 1e-8) -> None:
        """Eigenvalue check; expensive, so only tests and debug paths call it."""
        lowest = np.linalg.eigvalsh(self.matrix).min()
        if lowest < -tol:
            raise QuantumStateError(f"density matrix has eigenvalue {lowest!r} < 0")


@dataclass(frozen=True)
class CountsHistogram:
    num_qubits: int
    counts: Mapping[str, int]
    total_shots: int = field(default=-1)

    def __post_init__(self):
        counts = {str(k): int(v) for k, v in dict(self.counts).items()}
        for key, val in counts.items():
            if len(key) != self.num_qubits or set(key) - {"0", "1"}:
                raise QuantumStateError(f"bad bitstring key {key!r} for {self.num_qubits} qubits")
            if val < 0:
                raise QuantumStateError(f"negative count for {key!r}")
        total = sum(counts.values())
        if self.total_shots == -1:
            object.__setattr__(self, "total_shots", total)
        elif total != self.total_shots:
            raise QuantumStateError(f"counts sum to {total}, total_shots is {self.total_shots}")
        object.__setattr__(self, "counts", counts)

    def probabilities(self) -> dict[str, float]:
        return {k: v / self.total_shots for k, v in self.counts.items()}


# ---------------------------------------------------------------------------
# kernels on raw arrays: leading axis of length 2**m, trailing axes are batch


def _apply_1q(arr: np.ndarray, m: int, q: int, u: np.ndarray) -> np.ndarray:
    # Pair indices differing in bit q: stride 2**(m-q-1) on the leading axis.
    shape = arr.shape
    view = arr.reshape((1 << q, 2, 1 << (m - q - 1)) + shape[1:])
    a0, a1 = view[:, 0], view[:, 1]
    out = np.empty(view.shape, dtype=np.result_type(arr, u))
    out[:, 0] = u[0, 0] * a0 + u[0, 1] * a1
    out[:, 1] = u[1, 0] * a0 + u[1, 1] * a1
    return out.reshape(shape)


@lru_cache(maxsize=None)
def _permutation(m: int, kind: str, qubits: tuple[int, ...]) -> np.ndarray:
    idx = np.arange(1 << m)
    bit = lambda q: (idx >> (m - 1 - q)) & 1  # noqa: E731
    if kind == "X":
        (t,) = qubits
        perm = idx ^ (1 << (m - 1 - t))
    elif kind == "CNOT":
        c, t = qubits
        perm = idx ^ (bit(c) << (m - 1 - t))
    elif kind == "CSWAP":
        c, a, b = qubits
        differ = bit(c) & (bit(a) ^ bit(b))
        perm = idx ^ (differ << (m - 1 - a)) ^ (differ << (m - 1 - b))
    else:
        raise QuantumStateError(f"{kind} is not a permutation gate")
    perm.setflags(write=False)
    return perm


def apply_gate_array(arr: np.ndarray, gate: GateOp, m: int) -> np.ndarray:
    """Apply ``gate`` to every column of ``arr`` (leading axis ``2**m``)."""
    gate.check(m)
    if gate.kind in ("X", "CNOT", "CSWAP"):
        # All three are involutions, so the permutation is its own inverse.
        return arr[_permutation(m, gate.kind, gate.qubits)]
    return _apply_1q(arr, m, gate.qubits[0], single_qubit_matrix(gate))


def apply_gates_array(arr: np.ndarray, gates: Iterable[GateOp], m: int) -> np.ndarray:
    for gate in gates:
        arr = apply_gate_array(arr, gate, m)
    return arr


def conjugate_array(rho: np.ndarray, gate: GateOp, m: int) -> np.ndarray:
    """``U rho U^dagger`` for a (possibly batched) density-matrix array."""
    left = apply_gate_array(rho, gate, m)
    right = apply_gate_array(np.swapaxes(left, 0, 1).conj(), gate, m)
    return np.swapaxes(right, 0, 1).conj()


def operator_1q_array(rho: np.ndarray, m: int, q: int, k: np.ndarray) -> np.ndarray:
    """``K rho K^dagger`` with a 2x2 ``K`` on qubit ``q``."""
    left = _apply_1q(rho, m, q, k)
    right = _apply_1q(np.swapaxes(left, 0, 1).conj(), m, q, k)
    return np.swapaxes(right, 0, 1).conj()


# ---------------------------------------------------------------------------
# public value-level operations


def apply_gate(state: PureState, gate: GateOp) -> PureState:
    return PureState(state.num_qubits, apply_gate_array(state.amplitudes, gate, state.num_qubits))


def apply_gates(state: PureState, gates: Iterable[GateOp]) -> PureState:
    amps = apply_gates_array(state.amplitudes, gates, state.num_qubits)
    return PureState(state.num_qubits, amps)


def apply_gate_mixed(rho: MixedState, gate: GateOp) -> MixedState:
    return MixedState(rho.num_qubits, conjugate_array(rho.matrix, gate, rho.num_qubits))


def partial_trace_array(rho: np.ndarray, m: int, keep: Sequence[int]) -> np.ndarray:
    """Reduced matrix of a raw ``2**m x 2**m`` array; no validation."""
    traced = [q for q in range(m) if q not in keep]
    t = rho.reshape((2,) * (2 * m))
    row_axes = list(keep) + traced
    col_axes = [m + q for q in keep] + [m + q for q in traced]
    t = t.transpose(row_axes + col_axes)
    dk, dt = 1 << len(keep), 1 << len(traced)
    return np.einsum("atbt->ab", t.reshape(dk, dt, dk, dt))


def partial_trace(state: PureState | MixedState, keep: Sequence[int]) -> MixedState:
    m = state.num_qubits
    keep = list(keep)
    if not keep:
        raise QuantumStateError("keep list must be nonempty")
    if any(b <= a for a, b in zip(keep, keep[1:])):
        raise QuantumStateError(f"keep list must be strictly increasing, got {keep}")
    if keep[0] < 0 or keep[-1] >= m:
        raise QuantumStateError(f"keep indices {keep} out of range for {m} qubits")
    if isinstance(state, PureState):
        # Contract the state with itself directly instead of forming |psi><psi|.
        traced = [q for q in range(m) if q not in keep]
        psi = state.amplitudes.reshape((2,) * m).transpose(keep + traced)
        psi = psi.reshape(1 << len(keep), -1)
        reduced = psi @ psi.conj().T
    else:
        reduced = partial_trace_array(state.matrix, m, keep)
    return MixedState(len(keep), reduced)


def _clamp_unit(value: float, tol: float = NORM_TOL) -> float:
    if value < -tol or value > 1 + tol:
        raise QuantumStateError(f"fidelity {value!r} outside [0, 1] beyond tolerance")
    return min(max(value, 0.0), 1.0)


def fidelity_pure_mixed(psi: PureState, rho: MixedState) -> float:
    if psi.num_qubits != rho.num_qubits:
        raise QuantumStateError(
            f"qubit count mismatch: state has {psi.num_qubits}, matrix has {rho.num_qubits}"
        )
    a = psi.amplitudes
    return _clamp_unit(float(np.real(a.conj() @ rho.matrix @ a)))


def measure_probability_zero(state: PureState, qubit: int) -> float:
    m = state.num_qubits
    if not 0 <= qubit < m:
        raise QuantumStateError(f"qubit {qubit} out of range for {m} qubits")
    probs = state.probabilities().reshape(1 << qubit, 2, -1)
    return float(probs[:, 0].sum())


def _counts_from_probs(probs: np.ndarray, m: int, shots: int, seed: int) -> CountsHistogram:
    if shots < 1:
        raise QuantumStateError("shots must be >= 1")
    probs = np.clip(np.real(probs), 0.0, None)
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, probs)
    counts = {format(i, f"0{m}b"): int(c) for i, c in enumerate(draws) if c}
    return CountsHistogram(m, counts, shots)


def sample_counts(state: PureState, shots: int, seed: int) -> CountsHistogram:
    return _counts_from_probs(state.probabilities(), state.num_qubits, shots, seed)


def sample_counts_mixed(rho: MixedState, shots: int, seed: int) -> CountsHistogram:
    return _counts_from_probs(np.diag(rho.matrix), rho.num_qubits, shots, seed)


# ---------------------------------------------------------------------------
# dense reference route, kept for tests and small cross-checks


def dense_unitary(gate: GateOp, m: int) -> np.ndarray:
    """Full ``2**m`` matrix of ``gate``, built by Kronecker products."""
    gate.check(m)
    eye = np.eye(2, dtype=complex)
    p0 = np.diag([1, 0]).astype(complex)
    p1 = np.diag([0, 1]).astype(complex)

    def kron_all(factors: dict[int, np.ndarray]) -> np.ndarray:
        out = np.eye(1, dtype=complex)
        for q in range(m):
            out = np.kron(out, factors.get(q, eye))
        return out

    if GATE_ARITY[gate.kind] == 1:
        return kron_all({gate.qubits[0]: single_qubit_matrix(gate)})
    if gate.kind == "CNOT":
        c, t = gate.qubits
        return kron_all({c: p0}) + kron_all({c: p1, t: _X})
    c, a, b = gate.qubits
    swap = sum(
        kron_all({a: pa, b: pb}) for pa, pb in (
            (np.array([[1, 0], [0, 0]]), np.array([[1, 0], [0, 0]])),
            (np.array([[0, 1], [0, 0]]), np.array([[0, 0], [1, 0]])),
            (np.array([[0, 0], [1, 0]]), np.array([[0, 1], [0, 0]])),
            (np.array([[0, 0], [0, 1]]), np.array([[0, 0], [0, 1]])),
        )
    )
    return kron_all({c: p0}) + kron_all({c: p1}) @ swap
