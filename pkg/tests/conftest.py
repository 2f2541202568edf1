import itertools

import numpy as np
import pytest

from fidqae.qsim import GATE_ARITY, GateOp


def random_state(rng, m):
    v = rng.normal(size=1 << m) + 1j * rng.normal(size=1 << m)
    return v / np.linalg.norm(v)


def random_density(rng, m, rank=None):
    dim = 1 << m
    a = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_gate(rng, m):
    kinds = [k for k, n in GATE_ARITY.items() if n <= m]
    kind = kinds[rng.integers(len(kinds))]
    qubits = tuple(int(q) for q in rng.choice(m, GATE_ARITY[kind], replace=False))
    angle = float(rng.uniform(-2 * np.pi, 2 * np.pi)) if kind.startswith("R") else 0.0
    return GateOp(kind, qubits, angle)


def trace_out_by_summation(rho, m, keep):
    """Brute-force reduced matrix: explicit loops over every basis index."""
    traced = [q for q in range(m) if q not in keep]
    dk = 1 << len(keep)
    out = np.zeros((dk, dk), dtype=complex)

    def index(kept_bits, traced_bits):
        bits = [0] * m
        for q, b in zip(keep, kept_bits):
            bits[q] = b
        for q, b in zip(traced, traced_bits):
            bits[q] = b
        return int("".join(map(str, bits)), 2)

    for a, b in itertools.product(range(dk), repeat=2):
        abits = [(a >> (len(keep) - 1 - i)) & 1 for i in range(len(keep))]
        bbits = [(b >> (len(keep) - 1 - i)) & 1 for i in range(len(keep))]
        for t in itertools.product((0, 1), repeat=len(traced)):
            out[a, b] += rho[index(abits, t), index(bbits, t)]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
