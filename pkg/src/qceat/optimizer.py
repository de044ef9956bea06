"""Adam training of genome angles with parameter-shift gradients."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .genome import TWO_PI, Genome, build_hea, set_parameters
from .hamiltonians import PauliHamiltonian
from .simulator import CompiledCircuit, NoiseModel

SHIFT = math.pi / 2


class TrainingError(RuntimeError):
    """Raised when the cost becomes non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 500
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    convergence_tol: float | None = None
    convergence_window: int = 50
    gradient: str = "adjoint"  # or "shift"; both yield the parameter-shift gradient

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.eps_hat <= 0:
            raise ValueError("eps_hat must be positive")
        if self.gradient not in ("adjoint", "shift"):
            raise ValueError(f"unknown gradient method {self.gradient!r}")


@dataclass
class TrainResult:
    best_theta: np.ndarray
    best_cost: float
    cost_history: list[float]
    grad_norms: list[float]
    evaluations: int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "cost", "grad_norm"])
            for k, (c, gn) in enumerate(zip(self.cost_history, self.grad_norms)):
                w.writerow([k, repr(c), repr(gn)])


class CostFunction:
    """Training cost of one genome under a noise model.

    Noiseless and dephasing costs are deterministic. The coherent cost is the
    mean over ``noise.n_train_samples`` perturbations, redrawn on every call
    and shared by all shifted points of that call.
    """

    def __init__(self, g: Genome, h: PauliHamiltonian, noise: NoiseModel,
                 rng: np.random.Generator | None = None):
        if g.n_qubits != h.n_qubits:
            raise ValueError("genome and Hamiltonian qubit counts differ")
        self.circuit = CompiledCircuit(g)
        self.h = h
        self.noise = noise
        self.rng = rng if rng is not None else np.random.default_rng()
        self.evaluations = 0
        # dephasing only acts at CX gates, so CX-free circuits stay pure
        self.dephased = noise.kind == "incoherent" and noise.p > 0 and g.n_cx > 0

    @property
    def n_params(self) -> int:
        return self.circuit.n_params

    def _energies(self, points: np.ndarray) -> np.ndarray:
        """Per-point cost for a (K, M) stack of angle vectors, sharing one noise draw."""
        cc = self.circuit
        K = points.shape[0]
        if self.dephased:
            self.evaluations += K
            return cc.energies_mixed(self.h, points, self.noise.p)
        if self.noise.kind == "coherent":
            S = self.noise.n_train_samples
            offsets = self.rng.normal(0.0, self.noise.sigma, size=(S, self.n_params))
            batch = (points[:, None, :] + offsets[None, :, :]).reshape(K * S, self.n_params)
            self.evaluations += K * S
            return cc.energies_pure(self.h, batch).reshape(K, S).mean(axis=1)
        self.evaluations += K
        return cc.energies_pure(self.h, points)

    def value(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(self._energies(theta[None, :])[0])

    def value_and_grad(self, theta, method: str = "shift") -> tuple[float, np.ndarray]:
        """Cost and gradient; ``method="adjoint"`` reverse-propagates instead of shifting."""
        theta = np.asarray(theta, dtype=float)
        M = theta.shape[0]
        if M != self.n_params:
            raise ValueError(f"expected {self.n_params} angles, got {M}")
        if method == "adjoint":
            return self._adjoint(theta)
        if method != "shift":
            raise ValueError(f"unknown gradient method {method!r}")
        eye = SHIFT * np.eye(M)
        points = np.concatenate([theta[None, :], theta + eye, theta - eye])
        e = self._energies(points)
        grad = 0.5 * (e[1:M + 1] - e[M + 1:])
        return float(e[0]), grad

    def _adjoint(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        cc = self.circuit
        if self.dephased:
            self.evaluations += 1
            return cc.energy_grad_mixed(self.h, theta, self.noise.p)
        if self.noise.kind == "coherent":
            S = self.noise.n_train_samples
            batch = theta[None, :] + self.rng.normal(0.0, self.noise.sigma, size=(S, self.n_params))
        else:
            S = 1
            batch = theta[None, :]
        self.evaluations += S
        e, g = cc.energy_grad_pure(self.h, batch)
        return float(e.mean()), g.mean(axis=0)


def gradient(g: Genome, h: PauliHamiltonian, noise: NoiseModel, theta=None,
             rng: np.random.Generator | None = None, method: str = "shift") -> np.ndarray:
    """Parameter-shift gradient of the training cost at ``theta`` (default: the genome's angles)."""
    cost = CostFunction(g, h, noise, rng)
    theta = cost.circuit.theta0 if theta is None else np.asarray(theta, dtype=float)
    if theta.shape != (cost.n_params,):
        raise ValueError(f"expected {cost.n_params} angles, got {theta.shape}")
    return cost.value_and_grad(theta, method)[1]


def train(g: Genome, h: PauliHamiltonian, cfg: TrainConfig) -> TrainResult:
    """Adam from the genome's current angles; returns the best angles seen."""
    rng = np.random.default_rng(cfg.seed)
    cost = CostFunction(g, h, cfg.noise, rng)
    theta = cost.circuit.theta0.copy()
    if cost.n_params == 0:
        c = cost.value(theta)
        if not math.isfinite(c):
            raise TrainingError(f"non-finite cost {c} for parameter-free circuit")
        return TrainResult(theta, c, [c], [0.0], cost.evaluations)

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history: list[float] = []
    gnorms: list[float] = []
    best_cost = math.inf
    best_theta = theta.copy()
    b1, b2 = cfg.beta1, cfg.beta2
    for t in range(1, cfg.max_iters + 1):
        c, grad = cost.value_and_grad(theta, cfg.gradient)
        if not (math.isfinite(c) and np.all(np.isfinite(grad))):
            raise TrainingError(
                f"non-finite cost at iteration {t - 1}: cost={c}, |theta|max={np.max(np.abs(theta))}"
            )
        history.append(c)
        gnorms.append(float(np.linalg.norm(grad)))
        if c < best_cost:
            best_cost = c
            best_theta = theta.copy()
        if cfg.convergence_tol is not None and t > cfg.convergence_window:
            if min(history[:-cfg.convergence_window]) - best_cost < cfg.convergence_tol:
                break
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps_hat)
    return TrainResult(best_theta, best_cost, history, gnorms, cost.evaluations)


def trained_genome(g: Genome, result: TrainResult) -> Genome:
    return set_parameters(g, result.best_theta)


def train_hea(h: PauliHamiltonian, n_layers: int, cfg: TrainConfig,
              restarts: int = 1) -> tuple[Genome, TrainResult]:
    """Train HEA(n_qubits, n_layers) from angles drawn uniformly in [0, 2pi).

    The all-zero start is a stationary point of the HEA cost, so seeded random
    starts are used (drawn from a stream separate from the noise); with
    ``restarts > 1`` the lowest final cost wins, earliest start on ties.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    g = build_hea(h.n_qubits, n_layers)
    best: tuple[Genome, TrainResult] | None = None
    for r in range(restarts):
        init = np.random.default_rng([cfg.seed, 1, r]).uniform(0.0, TWO_PI, size=g.n_rotations)
        start = set_parameters(g, init)
        result = train(start, h, cfg)
        if best is None or result.best_cost < best[1].best_cost:
            best = (trained_genome(start, result), result)
    return best
