"""Layered circuit genomes over the {RX, RZ, CX} alphabet (plus RY for the HEA baseline)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hamiltonians import shipped_path

ROTATIONS = ("RX", "RY", "RZ")
SEARCH_KINDS = ("RX", "RZ", "CX")
ALL_KINDS = ("RX", "RY", "RZ", "CX")
TWO_PI = 2.0 * math.pi


class GenomeError(ValueError):
    """Raised when a genome violates its structural invariants."""


@dataclass(frozen=True)
class Gene:
    gate: str
    qubits: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        if self.gate not in ALL_KINDS:
            raise GenomeError(f"unknown gate kind {self.gate!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if self.gate == "CX":
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise GenomeError(f"CX needs two distinct qubits, got {self.qubits}")
            if self.theta is not None:
                raise GenomeError("CX carries no angle")
        else:
            if len(self.qubits) != 1:
                raise GenomeError(f"{self.gate} acts on one qubit, got {self.qubits}")
            if self.theta is None or not math.isfinite(self.theta):
                raise GenomeError(f"{self.gate} needs a finite angle")
            object.__setattr__(self, "theta", float(self.theta))

    @property
    def key(self) -> tuple[str, tuple[int, ...]]:
        """Structural identity: gate kind and qubit assignment, angle ignored."""
        return (self.gate, self.qubits)

    @property
    def is_rotation(self) -> bool:
        return self.gate != "CX"

    def with_theta(self, theta: float) -> Gene:
        return replace(self, theta=theta)

    def to_dict(self) -> dict:
        return {"gate": self.gate, "qubits": list(self.qubits), "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> Gene:
        return cls(d["gate"], tuple(d["qubits"]), d.get("theta"))

    def __str__(self) -> str:
        if self.gate == "CX":
            return f"CX({self.qubits[0]},{self.qubits[1]})"
        return f"{self.gate}(q{self.qubits[0]},{self.theta:.4g})"


@dataclass(frozen=True)
class Genome:
    """A circuit as ordered layers of genes; genes in one layer act on disjoint qubits.

    Layers are stored in canonical order (sorted by lowest touched qubit).
    """

    n_qubits: int
    layers: tuple[tuple[Gene, ...], ...] = field(default=())

    def __post_init__(self):
        if self.n_qubits < 1:
            raise GenomeError("n_qubits must be positive")
        layers = tuple(tuple(sorted(layer, key=lambda g: min(g.qubits))) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        self.check_invariants()

    def check_invariants(self) -> None:
        for k, layer in enumerate(self.layers):
            if not layer:
                raise GenomeError(f"layer {k} is empty")
            touched: set[int] = set()
            for g in layer:
                for q in g.qubits:
                    if not 0 <= q < self.n_qubits:
                        raise GenomeError(f"layer {k}: qubit {q} out of range")
                    if q in touched:
                        raise GenomeError(f"layer {k}: qubit {q} used twice")
                    touched.add(q)
            if list(layer) != sorted(layer, key=lambda g: min(g.qubits)):
                raise GenomeError(f"layer {k} not in canonical order")

    # -- views -------------------------------------------------------------
    @property
    def genes(self) -> tuple[Gene, ...]:
        """Layer-major flattening in canonical intra-layer order."""
        return tuple(g for layer in self.layers for g in layer)

    @property
    def structure(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        """Angle-free gene sequence; equal for genomes differing only in theta."""
        return tuple(g.key for g in self.genes)

    @property
    def n_genes(self) -> int:
        return sum(len(layer) for layer in self.layers)

    @property
    def n_rotations(self) -> int:
        return sum(g.is_rotation for g in self.genes)

    @property
    def n_cx(self) -> int:
        return sum(not g.is_rotation for g in self.genes)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __str__(self) -> str:
        return " | ".join(" ".join(str(g) for g in layer) for layer in self.layers) or "<empty>"

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "layers": [[g.to_dict() for g in layer] for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Genome:
        try:
            layers = tuple(tuple(Gene.from_dict(g) for g in layer) for layer in d["layers"])
            return cls(int(d["n_qubits"]), layers)
        except (KeyError, TypeError) as exc:
            raise GenomeError(f"malformed genome document: {exc!r}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> Genome:
        return cls.from_dict(json.loads(text))


def save_genome(g: Genome, path: str | Path, **extra) -> None:
    doc = g.to_dict()
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_genome(path: str | Path) -> Genome:
    return Genome.from_dict(json.loads(Path(path).read_text()))


def shipped_circuit_path(model: str, axis: str, train_point: float) -> Path:
    """Bundled reference circuit, e.g. ``("h2", "incoherent", 0.05)``."""
    return shipped_path(f"circuits/{model}_{axis}_{train_point:g}.json")


def pack(n_qubits: int, genes: Iterable[Gene]) -> Genome:
    """Place each gene, in order, in the earliest layer after the last gate on its qubits."""
    frontier = [0] * n_qubits
    layers: list[list[Gene]] = []
    for g in genes:
        k = max(frontier[q] for q in g.qubits)
        if k == len(layers):
            layers.append([])
        layers[k].append(g)
        for q in g.qubits:
            frontier[q] = k + 1
    return Genome(n_qubits, tuple(tuple(layer) for layer in layers))


def _rewrite_once(layers: list[list[Gene]]) -> bool:
    """Apply the first applicable absorption/cancellation between adjacent layers."""
    for k in range(len(layers) - 1):
        nxt = {g.qubits: i for i, g in enumerate(layers[k + 1])}
        for i, g in enumerate(layers[k]):
            j = nxt.get(g.qubits)
            if j is None:
                continue
            h = layers[k + 1][j]
            if g.gate != h.gate:
                continue
            if g.is_rotation:
                layers[k][i] = g.with_theta(g.theta + h.theta)
                del layers[k + 1][j]
            else:
                del layers[k][i]
                del layers[k + 1][j]
            return True
    return False


def simplify(g: Genome) -> Genome:
    """Merge same-kind rotations and cancel identical CX pairs in adjacent layers, to a fixed point."""
    layers = [list(layer) for layer in g.layers]
    changed = False
    while _rewrite_once(layers):
        changed = True
        layers = [layer for layer in layers if layer]
    if not changed:
        return g
    return Genome(g.n_qubits, tuple(tuple(layer) for layer in layers))


def from_sequence(n_qubits: int, genes: Sequence[Gene]) -> Genome:
    """Re-layer a gene sequence and simplify it."""
    return simplify(pack(n_qubits, genes))


def random_gene(n_qubits: int, rng: np.random.Generator, kinds: Sequence[str] = SEARCH_KINDS) -> Gene:
    while True:
        kind = kinds[rng.integers(len(kinds))]
        if kind == "CX":
            if n_qubits < 2:
                continue
            c = int(rng.integers(n_qubits))
            t = int(rng.integers(n_qubits - 1))
            t += t >= c
            return Gene("CX", (c, t))
        q = int(rng.integers(n_qubits))
        return Gene(kind, (q,), float(rng.uniform(0.0, TWO_PI)))


def random_genome(n_qubits: int, n_genes: int, rng: np.random.Generator) -> Genome:
    """``n_genes`` uniformly drawn genes, packed greedily then simplified."""
    if n_genes < 1:
        raise ValueError("n_genes must be at least 1")
    genes = [random_gene(n_qubits, rng) for _ in range(n_genes)]
    return from_sequence(n_qubits, genes)


def build_hea(n_qubits: int, n_layers: int, thetas: Sequence[float] | None = None) -> Genome:
    """Hardware-efficient ansatz: an (RY, RZ) column, then n_layers x [CX chain, (RY, RZ) column].

    Angles default to zero.
    """
    if n_qubits < 2 or n_layers < 1:
        raise ValueError("HEA needs n_qubits >= 2 and n_layers >= 1")
    genes: list[Gene] = []

    def column():
        for q in range(n_qubits):
            genes.append(Gene("RY", (q,), 0.0))
            genes.append(Gene("RZ", (q,), 0.0))

    column()
    for _ in range(n_layers):
        genes.extend(Gene("CX", (q, q + 1)) for q in range(n_qubits - 1))
        column()
    g = pack(n_qubits, genes)
    if thetas is not None:
        g = set_parameters(g, thetas)
    return g


def parameters(g: Genome) -> np.ndarray:
    """Rotation angles in layer-major canonical order."""
    return np.array([gene.theta for gene in g.genes if gene.is_rotation], dtype=float)


def set_parameters(g: Genome, thetas: Sequence[float]) -> Genome:
    thetas = np.asarray(thetas, dtype=float).ravel()
    if thetas.shape[0] != g.n_rotations:
        raise ValueError(f"expected {g.n_rotations} parameters, got {thetas.shape[0]}")
    it = iter(thetas.tolist())
    layers = tuple(
        tuple(gene.with_theta(next(it)) if gene.is_rotation else gene for gene in layer)
        for layer in g.layers
    )
    return Genome(g.n_qubits, layers)
