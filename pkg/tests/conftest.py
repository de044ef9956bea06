import functools

import numpy as np
import pytest

from qceat.hamiltonians import build_heisenberg, exact_diagonalize, load_hamiltonian, shipped_path

PAULI_2x2 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_pauli(pauli: str) -> np.ndarray:
    """Reference Pauli-string matrix via Kronecker products, qubit 0 leftmost."""
    return functools.reduce(np.kron, (PAULI_2x2[c] for c in pauli))


def kron_hamiltonian(h) -> np.ndarray:
    return sum(c * kron_pauli(p) for c, p in h.terms)


@pytest.fixture(scope="session")
def h2():
    return load_hamiltonian(shipped_path("h2_sto3g.json"))


@pytest.fixture(scope="session")
def h2_gs(h2):
    return exact_diagonalize(h2)


@pytest.fixture(scope="session")
def heis4():
    return build_heisenberg(4)


@pytest.fixture(scope="session")
def heis4_gs(heis4):
    return exact_diagonalize(heis4)


# -- reference circuit oracle: explicit Kronecker-product gate matrices --------------------
def embed(n: int, ops: dict) -> np.ndarray:
    """Tensor product with ``ops[q]`` on qubit q and identity elsewhere."""
    return functools.reduce(np.kron, (ops.get(q, PAULI_2x2["I"]) for q in range(n)))


def rotation_2x2(gate: str, theta: float) -> np.ndarray:
    sigma = PAULI_2x2[gate[1]]
    return np.cos(theta / 2) * PAULI_2x2["I"] - 1j * np.sin(theta / 2) * sigma


def gate_matrix(n: int, gene) -> np.ndarray:
    if gene.gate == "CX":
        c, t = gene.qubits
        p0 = np.diag([1, 0]).astype(complex)
        p1 = np.diag([0, 1]).astype(complex)
        return embed(n, {c: p0}) + embed(n, {c: p1, t: PAULI_2x2["X"]})
    return embed(n, {gene.qubits[0]: rotation_2x2(gene.gate, gene.theta)})


def reference_unitary(g) -> np.ndarray:
    u = np.eye(1 << g.n_qubits, dtype=complex)
    for gene in g.genes:
        u = gate_matrix(g.n_qubits, gene) @ u
    return u


def zero_state(n: int) -> np.ndarray:
    v = np.zeros(1 << n, dtype=complex)
    v[0] = 1
    return v


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    k = np.argmax(np.abs(b))
    if abs(b.flat[k]) < tol:
        return np.allclose(a, b, atol=tol)
    phase = a.flat[k] / b.flat[k]
    return abs(abs(phase) - 1) < tol and np.allclose(a, phase * b, atol=tol)


# -- hypothesis strategies ---------------------------------------------------------------
from hypothesis import strategies as st  # noqa: E402

from qceat.genome import Gene, pack  # noqa: E402


@st.composite
def genes(draw, n_qubits: int, kinds=("RX", "RZ", "CX")):
    kind = draw(st.sampled_from(kinds))
    if kind == "CX":
        c = draw(st.integers(0, n_qubits - 1))
        t = draw(st.integers(0, n_qubits - 2))
        return Gene("CX", (c, t + (t >= c)))
    q = draw(st.integers(0, n_qubits - 1))
    theta = draw(st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False))
    return Gene(kind, (q,), theta)


@st.composite
def genomes(draw, min_qubits=2, max_qubits=3, max_genes=10, kinds=("RX", "RZ", "CX")):
    n = draw(st.integers(min_qubits, max_qubits))
    seq = draw(st.lists(genes(n, kinds), max_size=max_genes))
    return pack(n, seq)
