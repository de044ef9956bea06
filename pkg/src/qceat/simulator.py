"""Exact simulation of genomes: statevectors, dephased density matrices and noisy observables.

All kernels work on batches: a ``(B, M)`` array of angle vectors produces
``B`` states at once, which is how Monte Carlo averages and parameter-shift
gradients are evaluated.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._kernels import GATE_CODES, mixed_energy_grad, pure_energy_grad
from .genome import Genome, parameters
from .hamiltonians import GroundTruth, PauliHamiltonian

# Angle perturbations are drawn as Normal(0, sigma); True reads the noise strength
# as sigma itself, False as the variance (sigma = sqrt(strength)).
DELTA_IS_STD = True

# "input": the dephased branch acts on the gate's input, p * sum |ij><ij| rho |ij><ij|.
# "output": the dephased branch follows the CX, p * sum |ij><ij| U rho U^+ |ij><ij|.
CX_DEPHASING = "input"

_CHUNK = 4096


@dataclass(frozen=True)
class NoiseModel:
    """Coherent angle noise (``delta``) or CX dephasing (``p``); at most one is active."""

    delta: float = 0.0
    p: float = 0.0
    n_train_samples: int = 50
    n_eval_samples: int = 10_000

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.delta > 0 and self.p > 0:
            raise ValueError("coherent and incoherent noise are studied separately")
        if self.n_train_samples < 1 or self.n_eval_samples < 1:
            raise ValueError("sample counts must be positive")

    @property
    def kind(self) -> str:
        if self.delta > 0:
            return "coherent"
        if self.p > 0:
            return "incoherent"
        return "none"

    @property
    def sigma(self) -> float:
        return self.delta if DELTA_IS_STD else math.sqrt(self.delta)

    def with_level(self, axis: str, level: float) -> NoiseModel:
        if axis == "coherent":
            return NoiseModel(level, 0.0, self.n_train_samples, self.n_eval_samples)
        if axis == "incoherent":
            return NoiseModel(0.0, level, self.n_train_samples, self.n_eval_samples)
        raise ValueError(f"unknown noise axis {axis!r}")

    @classmethod
    def parse(cls, text: str, **kw) -> NoiseModel:
        """``none``, ``coherent:<delta>`` or ``incoherent:<p>``."""
        text = text.strip().lower()
        if text in ("", "none", "noiseless"):
            return cls(**kw)
        kind, _, value = text.partition(":")
        try:
            level = float(value)
        except ValueError:
            raise ValueError(f"bad noise spec {text!r}") from None
        if kind == "coherent":
            return cls(delta=level, **kw)
        if kind == "incoherent":
            return cls(p=level, **kw)
        raise ValueError(f"bad noise spec {text!r}")

    def label(self) -> str:
        if self.kind == "coherent":
            return f"coherent:{self.delta:g}"
        if self.kind == "incoherent":
            return f"incoherent:{self.p:g}"
        return "none"


@dataclass(frozen=True)
class _Op:
    gate: str
    qubits: tuple[int, ...]
    param: int  # index into the angle vector, -1 for CX


def compile_ops(g: Genome) -> list[_Op]:
    ops = []
    k = 0
    for gene in g.genes:
        if gene.is_rotation:
            ops.append(_Op(gene.gate, gene.qubits, k))
            k += 1
        else:
            ops.append(_Op("CX", gene.qubits, -1))
    return ops


def _bit(n: int, q: int) -> int:
    return 1 << (n - 1 - q)


def cx_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    flip = (idx & _bit(n, control)) != 0
    return np.where(flip, idx ^ _bit(n, target), idx)


def dephasing_mask(n: int, a: int, b: int) -> np.ndarray:
    """Entries of rho surviving sum_ij |ij><ij| . |ij><ij| on qubits (a, b)."""
    idx = np.arange(1 << n)
    pm = _bit(n, a) | _bit(n, b)
    sel = idx & pm
    return sel[:, None] == sel[None, :]


def _rotation_coeffs(gate: str, theta: np.ndarray):
    """Matrix entries (m00, m01, m10, m11) of exp(-i theta sigma / 2)."""
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    if gate == "RX":
        return c, -1j * s, -1j * s, c
    if gate == "RY":
        return c, -s, s, c
    if gate == "RZ":
        return np.exp(-0.5j * theta), None, None, np.exp(0.5j * theta)
    raise ValueError(gate)


def _apply_2x2(v: np.ndarray, coeffs) -> np.ndarray:
    """Apply a batched 2x2 matrix to axis 2 of ``v`` shaped (B, L, 2, R); coeffs shaped (B,)."""
    m00, m01, m10, m11 = (None if m is None else np.asarray(m).reshape(-1, 1, 1) for m in coeffs)
    a0 = v[:, :, 0, :]
    a1 = v[:, :, 1, :]
    out = np.empty_like(v)
    if m01 is None:  # diagonal
        out[:, :, 0, :] = m00 * a0
        out[:, :, 1, :] = m11 * a1
    else:
        out[:, :, 0, :] = m00 * a0 + m01 * a1
        out[:, :, 1, :] = m10 * a0 + m11 * a1
    return out


class CompiledCircuit:
    """A genome lowered to a gate list with cached permutations and masks."""

    def __init__(self, g: Genome):
        self.genome = g
        self.n = g.n_qubits
        self.dim = 1 << self.n
        self.ops = compile_ops(g)
        self.n_params = g.n_rotations
        self.theta0 = parameters(g)
        self._perms = {op.qubits: cx_permutation(self.n, *op.qubits) for op in self.ops if op.gate == "CX"}
        self._masks: dict = {}
        self._codes = None

    def _mask(self, qubits):
        if qubits not in self._masks:
            self._masks[qubits] = dephasing_mask(self.n, *qubits)
        return self._masks[qubits]

    def _thetas(self, thetas) -> np.ndarray:
        if thetas is None:
            thetas = self.theta0[None, :]
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[None, :]
        if thetas.shape[1] != self.n_params:
            raise ValueError(f"expected {self.n_params} angles, got {thetas.shape[1]}")
        return thetas

    def pure(self, thetas=None, phi0: np.ndarray | None = None) -> np.ndarray:
        """Batched statevectors, shape (B, 2^n)."""
        thetas = self._thetas(thetas)
        B = thetas.shape[0]
        psi = np.zeros((B, self.dim), dtype=complex)
        if phi0 is None:
            psi[:, 0] = 1.0
        else:
            phi0 = np.asarray(phi0, dtype=complex)
            if phi0.shape != (self.dim,):
                raise ValueError(f"initial state must have dimension {self.dim}")
            psi[:] = phi0
        n = self.n
        for op in self.ops:
            if op.gate == "CX":
                psi = psi[:, self._perms[op.qubits]]
                continue
            q = op.qubits[0]
            v = psi.reshape(B, 1 << q, 2, 1 << (n - q - 1))
            psi = _apply_2x2(v, _rotation_coeffs(op.gate, thetas[:, op.param])).reshape(B, self.dim)
        return psi

    def mixed(self, thetas=None, p: float = 0.0, rho0: np.ndarray | None = None,
              mode: str | None = None) -> np.ndarray:
        """Batched density matrices, shape (B, 2^n, 2^n), with every CX dephased at rate p."""
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        mode = CX_DEPHASING if mode is None else mode
        if mode not in ("input", "output"):
            raise ValueError(f"unknown dephasing mode {mode!r}")
        thetas = self._thetas(thetas)
        B = thetas.shape[0]
        D = self.dim
        rho = np.zeros((B, D, D), dtype=complex)
        if rho0 is None:
            rho[:, 0, 0] = 1.0
        else:
            rho0 = np.asarray(rho0, dtype=complex)
            if rho0.ndim == 1:
                rho0 = np.outer(rho0, rho0.conj())
            if rho0.shape != (D, D):
                raise ValueError(f"initial state must have dimension {D}")
            rho[:] = rho0
        for op in self.ops:
            if op.gate == "CX":
                rho = self._cx_channel(rho, op.qubits, p, mode)
            else:
                rho = self._conj_rotation(rho, op.gate, op.qubits[0], thetas[:, op.param])
        return rho

    # -- reverse-mode gradients ----------------------------------------------------
    def _kernel_args(self):
        if self._codes is None:
            kinds = np.array([GATE_CODES[op.gate] for op in self.ops], dtype=np.int64)
            qa = np.array([op.qubits[0] for op in self.ops], dtype=np.int64)
            qb = np.array([op.qubits[-1] for op in self.ops], dtype=np.int64)
            pidx = np.array([op.param for op in self.ops], dtype=np.int64)
            self._codes = (kinds, qa, qb, pidx)
        return self._codes

    def energy_grad_pure(self, h: PauliHamiltonian, thetas) -> tuple[np.ndarray, np.ndarray]:
        """Per-row energies (B,) and gradients (B, M), by back-propagating H through the circuit.

        Each gradient entry equals the parameter-shift value
        [E(theta + pi/2 e_i) - E(theta - pi/2 e_i)] / 2.
        """
        thetas = np.ascontiguousarray(self._thetas(thetas))
        hmat = np.ascontiguousarray(h.matrix, dtype=complex)
        return pure_energy_grad(*self._kernel_args(), thetas, hmat, self.n)

    def energy_grad_mixed(self, h: PauliHamiltonian, theta, p: float,
                          mode: str | None = None) -> tuple[float, np.ndarray]:
        """Energy and exact gradient of Tr[H rho_p(theta)] via the adjoint channel."""
        mode = CX_DEPHASING if mode is None else mode
        if mode not in ("input", "output"):
            raise ValueError(f"unknown dephasing mode {mode!r}")
        theta = self._thetas(theta)
        if theta.shape[0] != 1:
            raise ValueError("energy_grad_mixed takes a single angle vector")
        hmat = np.ascontiguousarray(h.matrix, dtype=complex)
        e, g = mixed_energy_grad(*self._kernel_args(), np.ascontiguousarray(theta[0]), hmat,
                                 self.n, float(p), mode == "output")
        return float(e), g

    def _left(self, rho: np.ndarray, coeffs, q: int) -> np.ndarray:
        B, D = rho.shape[0], self.dim
        lo, hi = 1 << q, 1 << (self.n - q - 1)
        return _apply_2x2(rho.reshape(B, lo, 2, hi * D), coeffs).reshape(B, D, D)

    def _right_conj(self, rho: np.ndarray, coeffs, q: int) -> np.ndarray:
        """rho -> rho U^+ for U with the given entries."""
        B, D = rho.shape[0], self.dim
        lo, hi = 1 << q, 1 << (self.n - q - 1)
        conj = tuple(None if m is None else np.conj(m) for m in coeffs)
        return _apply_2x2(rho.reshape(B, D * lo, 2, hi), conj).reshape(B, D, D)

    def _conj_rotation(self, rho: np.ndarray, gate: str, q: int, theta: np.ndarray) -> np.ndarray:
        coeffs = _rotation_coeffs(gate, theta)
        return self._right_conj(self._left(rho, coeffs, q), coeffs, q)

    def _cx_channel(self, rho: np.ndarray, qubits, p: float, mode: str) -> np.ndarray:
        perm = self._perms[qubits]
        moved = rho[:, perm][:, :, perm]
        if p > 0:
            src = rho if mode == "input" else moved
            moved = (1 - p) * moved + p * np.where(self._mask(qubits), src, 0)
        return moved

    # -- observables over batches -------------------------------------------------
    def energies_pure(self, h: PauliHamiltonian, thetas) -> np.ndarray:
        out = []
        hm_t = h.matrix.T
        for chunk in _chunks(self._thetas(thetas)):
            psi = self.pure(chunk)
            out.append(np.real(np.sum(psi.conj() * (psi @ hm_t), axis=1)))
        return np.concatenate(out)

    def fidelities_pure(self, gs: GroundTruth, thetas) -> np.ndarray:
        return np.concatenate([gs.fidelity_pure(self.pure(c)) for c in _chunks(self._thetas(thetas))])

    def energies_mixed(self, h: PauliHamiltonian, thetas, p: float) -> np.ndarray:
        hv = h.matrix.T.ravel()
        out = []
        step = max(1, _CHUNK // self.dim)
        thetas = self._thetas(thetas)
        for i in range(0, thetas.shape[0], step):
            rho = self.mixed(thetas[i:i + step], p)
            out.append(np.real(rho.reshape(rho.shape[0], -1) @ hv))
        return np.concatenate(out)

    def fidelities_mixed(self, gs: GroundTruth, thetas, p: float) -> np.ndarray:
        return gs.fidelity_mixed(self.mixed(thetas, p))


def _chunks(thetas: np.ndarray):
    for i in range(0, thetas.shape[0], _CHUNK):
        yield thetas[i:i + _CHUNK]


def perturbed(theta: np.ndarray, sigma: float, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """``n_samples`` copies of ``theta`` with independent Normal(0, sigma) offsets."""
    theta = np.asarray(theta, dtype=float)
    if sigma == 0:
        return np.repeat(theta[None, :], n_samples, axis=0)
    return theta[None, :] + rng.normal(0.0, sigma, size=(n_samples, theta.shape[0]))


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = values.shape[0]
    mean = float(np.mean(values))
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


# -- public single-circuit API ---------------------------------------------------
def run_pure(g: Genome, phi0: np.ndarray | None = None) -> np.ndarray:
    return CompiledCircuit(g).pure(None, phi0)[0]


def run_mixed(g: Genome, phi0: np.ndarray | None = None, p: float = 0.0, mode: str | None = None) -> np.ndarray:
    return CompiledCircuit(g).mixed(None, p, phi0, mode=mode)[0]


def _noise_sigma(delta: float) -> float:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return delta if DELTA_IS_STD else math.sqrt(delta)


def energy_coherent(g: Genome, h: PauliHamiltonian, delta: float, n_samples: int,
                    rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of <H> over Gaussian-perturbed rotation angles."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    cc = CompiledCircuit(g)
    sigma = _noise_sigma(delta)
    if sigma == 0:
        return float(cc.energies_pure(h, cc.theta0)[0]), 0.0
    return _mean_stderr(cc.energies_pure(h, perturbed(cc.theta0, sigma, n_samples, rng)))


def fidelity_coherent(g: Genome, gs: GroundTruth, delta: float, n_samples: int,
                      rng: np.random.Generator) -> tuple[float, float]:
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    cc = CompiledCircuit(g)
    sigma = _noise_sigma(delta)
    if sigma == 0:
        return float(cc.fidelities_pure(gs, cc.theta0)[0]), 0.0
    return _mean_stderr(cc.fidelities_pure(gs, perturbed(cc.theta0, sigma, n_samples, rng)))


def energy_incoherent(g: Genome, h: PauliHamiltonian, p: float) -> float:
    cc = CompiledCircuit(g)
    return float(cc.energies_mixed(h, cc.theta0, p)[0])


def fidelity_incoherent(g: Genome, gs: GroundTruth, p: float) -> float:
    cc = CompiledCircuit(g)
    return float(cc.fidelities_mixed(gs, cc.theta0, p)[0])


def evaluate(g: Genome, h: PauliHamiltonian, gs: GroundTruth | None, noise: NoiseModel,
             rng: np.random.Generator, n_samples: int | None = None) -> dict:
    """Energy and fidelity (mean, stderr) of a trained circuit under ``noise``."""
    n_samples = noise.n_eval_samples if n_samples is None else n_samples
    cc = CompiledCircuit(g)
    if noise.kind == "incoherent":
        rho = cc.mixed(cc.theta0, noise.p)
        e = float(np.real(rho.reshape(1, -1) @ h.matrix.T.ravel())[0])
        f = float(gs.fidelity_mixed(rho)[0]) if gs is not None else float("nan")
        return {"energy": (e, 0.0), "fidelity": (f, 0.0)}
    sigma = noise.sigma
    thetas = perturbed(cc.theta0, sigma, n_samples if sigma > 0 else 1, rng)
    e_vals = np.empty(thetas.shape[0])
    f_vals = np.empty(thetas.shape[0])
    hm_t = h.matrix.T
    for i, chunk in enumerate(_chunks(thetas)):
        psi = cc.pure(chunk)
        sl = slice(i * _CHUNK, i * _CHUNK + chunk.shape[0])
        e_vals[sl] = np.real(np.sum(psi.conj() * (psi @ hm_t), axis=1))
        f_vals[sl] = gs.fidelity_pure(psi) if gs is not None else np.nan
    return {"energy": _mean_stderr(e_vals), "fidelity": _mean_stderr(f_vals)}


def state_to_json(state: np.ndarray) -> str:
    """Interleaved (real, imag) dump of a statevector or density matrix."""
    arr = np.asarray(state, dtype=complex)
    inter = np.stack([arr.real, arr.imag], axis=-1)
    return json.dumps({"shape": list(arr.shape), "data": inter.ravel().tolist()})


def state_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    flat = np.asarray(doc["data"], dtype=float)
    return (flat[0::2] + 1j * flat[1::2]).reshape(doc["shape"])


def basis_state(n_qubits: int, bits: Sequence[int] | str) -> np.ndarray:
    """Computational basis vector; ``bits[0]`` is qubit 0."""
    idx = int("".join(str(int(b)) for b in bits), 2)
    v = np.zeros(1 << n_qubits, dtype=complex)
    v[idx] = 1.0
    return v
