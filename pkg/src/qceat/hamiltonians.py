"""Pauli-string observables, the model Hamiltonians and a dense ground-state oracle.

Convention: qubit 0 is the leftmost letter of a Pauli string and the most
significant bit of a computational-basis index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAULI_LETTERS = frozenset("IXYZ")
MAX_DENSE_QUBITS = 12


class HamiltonianFormatError(ValueError):
    """Raised for malformed Hamiltonian files or terms."""


def _check_pauli(pauli: str, n_qubits: int, where: str) -> str:
    if not isinstance(pauli, str) or len(pauli) != n_qubits:
        raise HamiltonianFormatError(
            f"{where}: Pauli string {pauli!r} does not have length {n_qubits}"
        )
    bad = set(pauli) - PAULI_LETTERS
    if bad:
        raise HamiltonianFormatError(f"{where}: Pauli string {pauli!r} has letters {sorted(bad)}")
    return pauli


def _check_coeff(coeff, where: str) -> float:
    if isinstance(coeff, bool) or not isinstance(coeff, (int, float, np.floating, np.integer)):
        raise HamiltonianFormatError(f"{where}: coefficient {coeff!r} is not a real number")
    value = float(coeff)
    if not math.isfinite(value):
        raise HamiltonianFormatError(f"{where}: coefficient {coeff!r} is not finite")
    return value


def pauli_matrix(pauli: str) -> np.ndarray:
    """Dense matrix of one Pauli string, built from bit masks."""
    n = len(pauli)
    dim = 1 << n
    xmask = zmask = 0
    n_y = 0
    for q, letter in enumerate(pauli):
        bit = 1 << (n - 1 - q)
        if letter in "XY":
            xmask |= bit
        if letter in "ZY":
            zmask |= bit
        n_y += letter == "Y"
    cols = np.arange(dim)
    rows = cols ^ xmask
    # Y = i X Z, so P|b> = i^{n_y} (-1)^{|b & zmask|} |b ^ xmask>
    parity = np.array([bin(b & zmask).count("1") & 1 for b in range(dim)])
    values = (1j**n_y) * (1 - 2 * parity)
    mat = np.zeros((dim, dim), dtype=complex)
    mat[rows, cols] = values
    return mat


@dataclass(frozen=True)
class PauliHamiltonian:
    """Real-weighted sum of Pauli strings.

    ``terms`` holds ``(coefficient, pauli)`` pairs with unique strings; use
    :meth:`from_terms` to build one from raw (possibly duplicated) terms.
    """

    n_qubits: int
    terms: tuple[tuple[float, str], ...]
    unit: str = ""
    reference_ground_energy: float | None = None

    def __post_init__(self):
        if self.n_qubits < 1:
            raise HamiltonianFormatError("n_qubits must be positive")
        seen = set()
        for k, (c, p) in enumerate(self.terms):
            _check_pauli(p, self.n_qubits, f"term {k}")
            _check_coeff(c, f"term {k} ({p})")
            if p in seen:
                raise HamiltonianFormatError(f"term {k}: duplicate Pauli string {p}")
            seen.add(p)

    @classmethod
    def from_terms(
        cls,
        n_qubits: int,
        terms: Iterable[tuple[str, float]],
        unit: str = "",
        reference_ground_energy: float | None = None,
    ) -> PauliHamiltonian:
        """Merge ``(pauli, coeff)`` pairs, summing duplicates in first-seen order."""
        merged: dict[str, float] = {}
        for k, (pauli, coeff) in enumerate(terms):
            _check_pauli(pauli, n_qubits, f"term {k}")
            value = _check_coeff(coeff, f"term {k} ({pauli})")
            merged[pauli] = merged.get(pauli, 0.0) + value
        return cls(
            n_qubits,
            tuple((c, p) for p, c in merged.items()),
            unit=unit,
            reference_ground_energy=reference_ground_energy,
        )

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @cached_property
    def matrix(self) -> np.ndarray:
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise ValueError(f"dense build limited to {MAX_DENSE_QUBITS} qubits")
        mat = np.zeros((self.dim, self.dim), dtype=complex)
        for c, p in self.terms:
            mat += c * pauli_matrix(p)
        return mat

    def scaled(self, factor: float) -> PauliHamiltonian:
        return PauliHamiltonian(
            self.n_qubits, tuple((factor * c, p) for c, p in self.terms), unit=self.unit
        )

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "unit": self.unit,
            "reference_ground_energy": self.reference_ground_energy,
            "terms": [{"pauli": p, "coeff": c} for c, p in self.terms],
        }


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Lowest eigenpair of a Hamiltonian.

    ``ground_space`` has one orthonormal column per degenerate ground state;
    fidelities are taken against the projector onto it.
    """

    energy: float
    state: np.ndarray
    degenerate: bool
    ground_space: np.ndarray
    spectrum_min: float
    spectrum_max: float

    def fidelity_pure(self, psi: np.ndarray) -> np.ndarray:
        """|<gs|psi>|^2 for a single state or a batch of row vectors."""
        amps = np.asarray(psi) @ self.ground_space.conj()
        return np.sum(np.abs(amps) ** 2, axis=-1)

    def fidelity_mixed(self, rho: np.ndarray) -> np.ndarray:
        g = self.ground_space
        val = np.einsum("ik,...ij,jk->...", g.conj(), rho, g)
        return np.real(val)


def load_hamiltonian(path: str | Path) -> PauliHamiltonian:
    """Read a Hamiltonian JSON file (duplicate strings are merged)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise HamiltonianFormatError(f"{path}: invalid JSON ({exc})") from exc
    return hamiltonian_from_dict(doc, source=str(path))


def hamiltonian_from_dict(doc: dict, source: str = "<dict>") -> PauliHamiltonian:
    if not isinstance(doc, dict):
        raise HamiltonianFormatError(f"{source}: top level must be an object")
    n = doc.get("n_qubits")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise HamiltonianFormatError(f"{source}: n_qubits must be a positive integer")
    raw_terms = doc.get("terms")
    if not isinstance(raw_terms, list) or not raw_terms:
        raise HamiltonianFormatError(f"{source}: terms must be a non-empty list")
    pairs = []
    for k, t in enumerate(raw_terms):
        if not isinstance(t, dict) or "pauli" not in t or "coeff" not in t:
            raise HamiltonianFormatError(f"{source}: term {k} needs 'pauli' and 'coeff'")
        pairs.append((t["pauli"], t["coeff"]))
    ref = doc.get("reference_ground_energy")
    if ref is not None:
        ref = _check_coeff(ref, f"{source}: reference_ground_energy")
    return PauliHamiltonian.from_terms(
        n, pairs, unit=str(doc.get("unit", "")), reference_ground_energy=ref
    )


def shipped_path(name: str) -> Path:
    """Path of a data file bundled with the package (e.g. ``h2_sto3g.json``)."""
    return Path(str(resources.files("qceat") / "data" / name))


def build_heisenberg(n_qubits: int, J: float = 1.0) -> PauliHamiltonian:
    """Open-chain antiferromagnetic Heisenberg model J * sum (XX + YY + ZZ)."""
    if n_qubits < 2:
        raise ValueError("Heisenberg chain needs at least 2 qubits")
    if not J > 0:
        raise ValueError("J must be positive")
    terms = []
    for i in range(n_qubits - 1):
        for letter in "XYZ":
            ops = ["I"] * n_qubits
            ops[i] = ops[i + 1] = letter
            terms.append(("".join(ops), J))
    return PauliHamiltonian.from_terms(n_qubits, terms, unit="J")


def exact_diagonalize(h: PauliHamiltonian, degeneracy_tol: float = 1e-8) -> GroundTruth:
    if h.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"exact diagonalization limited to {MAX_DENSE_QUBITS} qubits")
    evals, evecs = np.linalg.eigh(h.matrix)
    e0 = float(evals[0])
    tol = degeneracy_tol * max(1.0, abs(e0))
    k = int(np.sum(evals - e0 < tol))
    space = evecs[:, :k]
    state = space[:, 0].copy()
    # fix the global phase so the largest amplitude is real and positive
    j = int(np.argmax(np.abs(state)))
    state *= np.abs(state[j]) / state[j]
    return GroundTruth(
        energy=e0,
        state=state,
        degenerate=k > 1,
        ground_space=space,
        spectrum_min=e0,
        spectrum_max=float(evals[-1]),
    )


def expectation(h: PauliHamiltonian, state: np.ndarray) -> float:
    """<H> for a statevector (1-D) or density matrix (2-D)."""
    state = np.asarray(state)
    if state.ndim == 1:
        if state.shape != (h.dim,):
            raise ValueError(f"state has dimension {state.shape[0]}, expected {h.dim}")
        norm = np.vdot(state, state).real
        if abs(norm - 1) > 1e-9:
            raise ValueError(f"state is not normalized (norm^2 = {norm})")
        val = np.vdot(state, h.matrix @ state)
    elif state.ndim == 2:
        if state.shape != (h.dim, h.dim):
            raise ValueError(f"density matrix has shape {state.shape}, expected {(h.dim, h.dim)}")
        tr = np.trace(state)
        if abs(tr - 1) > 1e-9:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        val = np.einsum("ij,ji->", h.matrix, state)
    else:
        raise ValueError("state must be a vector or a square matrix")
    scale = 1.0 + sum(abs(c) for c, _ in h.terms)
    if abs(val.imag) > 1e-10 * scale:
        raise ValueError(f"expectation has imaginary part {val.imag}")
    return float(val.real)


def pauli_expectations(h: PauliHamiltonian, state: np.ndarray) -> Sequence[float]:
    """Per-term <P_k>, in term order."""
    sub = [PauliHamiltonian.from_terms(h.n_qubits, [(p, 1.0)]) for _, p in h.terms]
    return [expectation(s, state) for s in sub]
