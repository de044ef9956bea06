"""The QCEAT loop: speciation, mutation, intra/interspecies crossover and two-stage selection."""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .genome import Gene, Genome, from_sequence, random_gene, random_genome
from .hamiltonians import PauliHamiltonian
from .optimizer import TrainConfig, TrainingError, TrainResult, train, trained_genome
from .simulator import CompiledCircuit, NoiseModel, perturbed

ELITISM_NOTE = "elitism extension: the best trained genome is exempt from both selections"


@dataclass(frozen=True)
class EvolutionConfig:
    p_mut: float = 0.7
    p_add: float = 0.625
    p_sub: float = 0.25
    p_del: float = 0.125
    p_cross_intra: float = 0.05
    p_cross_inter: float = 0.1
    eta: float = 0.3
    n_r: int = 50
    n_inner: int = 3
    n_outer: int = 10
    initial_population_size: int | None = None  # None -> number of qubits
    initial_gene_count: int | None = None  # None -> number of qubits
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    fitness_samples: int = 1000
    pick_tol: float = 1e-6  # final pick: fewest genes among energies within this of the best
    dedupe_structures: bool = True  # selections keep one member per gate structure
    cap_intra_offspring: bool = True  # at most |mutated species| intraspecies children
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        for name in ("p_mut", "p_add", "p_sub", "p_del", "p_cross_intra", "p_cross_inter"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if abs(self.p_add + self.p_sub + self.p_del - 1.0) > 1e-12:
            raise ValueError("p_add + p_sub + p_del must equal 1")
        if self.eta < 0 or self.n_r < 1 or self.n_inner < 0 or self.n_outer < 0:
            raise ValueError("invalid eta / n_r / loop counts")
        if self.pick_tol < 0:
            raise ValueError("pick_tol must be non-negative")
        if self.fitness_samples < 1 or self.threads < 1:
            raise ValueError("fitness_samples and threads must be positive")

    def to_dict(self, runtime: bool = True) -> dict:
        """Field dict; ``runtime=False`` drops settings that cannot change results (threads)."""
        d = asdict(self)
        if not runtime:
            del d["threads"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvolutionConfig:
        d = dict(d)
        tc = dict(d.pop("train_cfg", {}) or {})
        noise = tc.pop("noise", None)
        if isinstance(noise, str):
            noise = NoiseModel.parse(noise)
        elif isinstance(noise, dict):
            noise = NoiseModel(**noise)
        if noise is not None:
            tc["noise"] = noise
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown evolution config fields: {sorted(unknown)}")
        return cls(train_cfg=TrainConfig(**tc), **d)


@dataclass(eq=False)
class Individual:
    serial: int
    genome: Genome
    fitness: float | None = None
    result: TrainResult | None = None
    origin: str = "init"

    @property
    def n_genes(self) -> int:
        return self.genome.n_genes


@dataclass(eq=False)
class Species:
    members: list

    def __len__(self) -> int:
        return len(self.members)


@dataclass(eq=False)
class Population:
    species: list[Species]
    outer: int = 0
    inner: int = 0

    @property
    def individuals(self) -> list:
        return [m for s in self.species for m in s.members]

    def __len__(self) -> int:
        return sum(len(s) for s in self.species)


@dataclass
class QCEATResult:
    best: Individual
    population: Population
    log: list[dict]

    @property
    def best_genome(self) -> Genome:
        return self.best.genome


def genome_hash(g: Genome) -> str:
    return hashlib.sha256(g.to_json().encode()).hexdigest()[:16]


def structure_hash(g: Genome) -> str:
    return hashlib.sha256(repr(g.structure).encode()).hexdigest()[:16]


def _derived_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _genome_of(x) -> Genome:
    return x if isinstance(x, Genome) else x.genome


# -- distance and speciation ----------------------------------------------------------
def edit_distance(a, b) -> int:
    """Levenshtein distance between two gene-structure sequences (unit-cost add/delete/substitute).

    Accepts genomes or structure tuples; genes match when kind and qubits agree.
    """
    sa = a.structure if isinstance(a, Genome) else tuple(a)
    sb = b.structure if isinstance(b, Genome) else tuple(b)
    prev = list(range(len(sb) + 1))
    for i, x in enumerate(sa, 1):
        cur = [i] + [0] * len(sb)
        for j, y in enumerate(sb, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def speciate(items: Sequence, eta: float) -> list[Species]:
    """Sequential threshold clustering by average edit distance.

    Each item joins the first species whose average distance to it is below
    ``eta * N_g``, with ``N_g`` the larger of its gene count and the species'
    largest gene count; otherwise it founds a new species.
    """
    if not items:
        raise ValueError("cannot speciate an empty population")
    species: list[Species] = []
    max_genes: list[int] = []
    for item in items:
        g = _genome_of(item)
        placed = False
        for k, s in enumerate(species):
            avg = sum(edit_distance(g, _genome_of(m)) for m in s.members) / len(s)
            if avg < eta * max(g.n_genes, max_genes[k]):
                s.members.append(item)
                max_genes[k] = max(max_genes[k], g.n_genes)
                placed = True
                break
        if not placed:
            species.append(Species([item]))
            max_genes.append(g.n_genes)
    return species


# -- variation operators ------------------------------------------------------------
def mutate(g: Genome, cfg: EvolutionConfig, rng: np.random.Generator) -> tuple[Genome, str | None]:
    """Returns ``(child, action)``; ``action`` is None (and ``child is g``) when no mutation fires."""
    if rng.random() >= cfg.p_mut:
        return g, None
    u = rng.random()
    if u < cfg.p_add:
        action = "add"
    elif u < cfg.p_add + cfg.p_sub:
        action = "sub"
    else:
        action = "del"
    genes = list(g.genes)
    if action == "del" and len(genes) <= 1:
        action = "add"
    if action == "sub" and not genes:
        action = "add"
    n = g.n_qubits
    if action == "add":
        pos = int(rng.integers(len(genes) + 1))
        genes.insert(pos, random_gene(n, rng))
    elif action == "sub":
        genes[int(rng.integers(len(genes)))] = random_gene(n, rng)
    else:
        del genes[int(rng.integers(len(genes)))]
    return from_sequence(n, genes), action


def lcs_pairs(sa: Sequence, sb: Sequence) -> list[tuple[int, int]]:
    """Index pairs of one longest common subsequence of ``sa`` and ``sb``."""
    m, n = len(sa), len(sb)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        for j in range(n - 1, -1, -1):
            if sa[i] == sb[j]:
                dp[i][j] = dp[i + 1][j + 1] + 1
            else:
                dp[i][j] = max(dp[i + 1][j], dp[i][j + 1])
    pairs = []
    i = j = 0
    while i < m and j < n:
        if sa[i] == sb[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def _merge_gene(x: Gene, y: Gene) -> Gene:
    if x.is_rotation:
        return x.with_theta(0.5 * (x.theta + y.theta))
    return x


def crossover_intra_sequence(a: Genome, b: Genome) -> list[Gene]:
    """Offspring gene sequence before re-layering: matched genes once, all unmatched genes kept."""
    ga, gb = a.genes, b.genes
    out: list[Gene] = []
    i = j = 0
    for mi, mj in lcs_pairs(a.structure, b.structure) + [(len(ga), len(gb))]:
        out.extend(ga[i:mi])
        out.extend(gb[j:mj])
        if mi < len(ga):
            out.append(_merge_gene(ga[mi], gb[mj]))
        i, j = mi + 1, mj + 1
    return out


def crossover_intra(a: Genome, b: Genome) -> Genome:
    """Align the parents on their longest common gene subsequence and keep every gene."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("parents differ in qubit count")
    return from_sequence(a.n_qubits, crossover_intra_sequence(a, b))


def crossover_inter_sequence(a: Genome, b: Genome, rng: np.random.Generator) -> list[Gene]:
    out: list[Gene] = []
    for k in range(max(a.depth, b.depth)):
        if k >= b.depth:
            out.extend(a.layers[k])
            continue
        if k >= a.depth:
            out.extend(b.layers[k])
            continue
        la, lb = a.layers[k], b.layers[k]
        keys_b = {g.key: g for g in lb}
        keys_a = {g.key for g in la}
        chosen: list[Gene] = []
        for g in la:
            if g.key in keys_b:
                chosen.append(g if rng.random() < 0.5 else keys_b[g.key])
        ua = [g for g in la if g.key not in keys_b]
        ub = [g for g in lb if g.key not in keys_a]
        for slot in range(max(len(ua), len(ub))):
            if slot < len(ua) and slot < len(ub):
                chosen.append(ua[slot] if rng.random() < 0.5 else ub[slot])
            else:
                lone = ua[slot] if slot < len(ua) else ub[slot]
                if rng.random() < 0.5:
                    chosen.append(lone)
        chosen.sort(key=lambda g: min(g.qubits))
        out.extend(chosen)
    return out


def crossover_inter(a: Genome, b: Genome, rng: np.random.Generator) -> Genome:
    """Layer-aligned recombination: matched genes inherited, unmatched slots resolved by coin flips."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("parents differ in qubit count")
    return from_sequence(a.n_qubits, crossover_inter_sequence(a, b, rng))


# -- selection ------------------------------------------------------------------------
def rank(members: Iterable[Individual], tol: float = 0.0) -> list[Individual]:
    """Best first: lower energy, with energies within ``tol`` of a group's best tied.

    Tied members are ordered by gene count, then serial number.
    """
    by_fitness = sorted(members, key=lambda m: (m.fitness, m.n_genes, m.serial))
    out: list[Individual] = []
    i = 0
    while i < len(by_fitness):
        f0 = by_fitness[i].fitness
        j = i
        while j < len(by_fitness) and by_fitness[j].fitness - f0 <= tol:
            j += 1
        out.extend(sorted(by_fitness[i:j], key=lambda m: (m.n_genes, m.serial)))
        i = j
    return out


def _require_fitness(members: Iterable[Individual]) -> None:
    for m in members:
        if m.fitness is None:
            raise ValueError(f"individual {m.serial} has not been evaluated")


def _unique_structures(ranked: list[Individual], protect: set[int]) -> list[Individual]:
    """Drop members whose gate structure already appears earlier in the ranking."""
    seen: set = set()
    out = []
    for m in ranked:
        key = m.genome.structure
        if key not in seen or m.serial in protect:
            out.append(m)
        seen.add(key)
    return out


def select_cross_species(s: Species, protect: Iterable[int] = (), tol: float = 0.0,
                         dedupe: bool = False) -> Species:
    """Keep the ceil(|s|/2) best-ranked members, plus any protected ones.

    With ``dedupe`` only the best member of each gate structure competes.
    """
    _require_fitness(s.members)
    keep = math.ceil(len(s) / 2)
    ranked = rank(s.members, tol)
    if dedupe:
        ranked = _unique_structures(ranked, set(protect))
    kept = ranked[:keep]
    protect = set(protect)
    kept += [m for m in ranked[keep:] if m.serial in protect]
    kept.sort(key=lambda m: m.serial)
    return Species(kept)


def select_population(p: Population, n_r: int, protect: Iterable[int] = (), tol: float = 0.0,
                      dedupe: bool = False) -> Population:
    """Truncate the population to its n_r best-ranked members, dropping emptied species."""
    members = p.individuals
    _require_fitness(members)
    protect = set(protect)
    ranked = rank(members, tol)
    if dedupe:
        ranked = _unique_structures(ranked, protect)
    if len(ranked) <= n_r:
        survivors = {m.serial for m in ranked}
        species = [Species([m for m in s.members if m.serial in survivors]) for s in p.species]
        return Population([s for s in species if s.members], p.outer, p.inner)
    survivors = {m.serial for m in ranked[:n_r]}
    extra = [m for m in ranked[n_r:] if m.serial in protect]
    if extra:
        # exempt the protected members and drop the worst others instead
        kept = [m for m in ranked if m.serial in protect]
        others = [m for m in ranked if m.serial not in protect][: max(0, n_r - len(kept))]
        survivors = {m.serial for m in others} | {m.serial for m in kept}
    species = []
    for s in p.species:
        kept = [m for m in s.members if m.serial in survivors]
        if kept:
            species.append(Species(kept))
    return Population(species, p.outer, p.inner)


# -- training / fitness ----------------------------------------------------------------
class Trainer:
    """Trains genomes and caches fitness by (structure, angles, noise)."""

    def __init__(self, h: PauliHamiltonian, cfg: EvolutionConfig):
        self.h = h
        self.cfg = cfg
        self.cache: dict[tuple, tuple[Genome, float, TrainResult]] = {}

    def _key(self, g: Genome) -> tuple:
        return (g.structure, g_params_bytes(g), self.cfg.train_cfg.noise.label())

    def _job(self, g: Genome) -> tuple[Genome, float, TrainResult]:
        tc = self.cfg.train_cfg
        seed = _derived_seed(self.cfg.seed, genome_hash(g), tc.noise.label())
        result = train(g, self.h, replace(tc, seed=seed))
        tg = trained_genome(g, result)
        fitness = result.best_cost
        if tc.noise.kind == "coherent":
            cc = CompiledCircuit(tg)
            rng = np.random.default_rng(seed + 1)
            samples = perturbed(cc.theta0, tc.noise.sigma, self.cfg.fitness_samples, rng)
            fitness = float(np.mean(cc.energies_pure(self.h, samples)))
        if not math.isfinite(fitness):
            raise TrainingError(f"non-finite fitness {fitness}")
        return tg, fitness, result

    def _safe_job(self, g: Genome):
        try:
            return self._job(g)
        except (TrainingError, FloatingPointError) as exc:
            return exc

    def train_all(self, individuals: list[Individual]) -> list[tuple[Individual, Exception]]:
        """Train in place; returns the failures (which callers discard)."""
        todo: dict[tuple, Genome] = {}
        for ind in individuals:
            key = self._key(ind.genome)
            if key not in self.cache and key not in todo:
                todo[key] = ind.genome
        keys = list(todo)
        if self.cfg.threads > 1 and len(keys) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as pool:
                outs = list(pool.map(self._safe_job, [todo[k] for k in keys]))
        else:
            outs = [self._safe_job(todo[k]) for k in keys]
        failed: dict[tuple, Exception] = {}
        for k, out in zip(keys, outs):
            if isinstance(out, Exception):
                failed[k] = out
            else:
                self.cache[k] = out
        failures = []
        for ind in individuals:
            key = self._key(ind.genome)
            if key in failed:
                failures.append((ind, failed[key]))
                continue
            tg, fitness, result = self.cache[key]
            ind.genome, ind.fitness, ind.result = tg, fitness, result
        return failures


def g_params_bytes(g: Genome) -> bytes:
    return np.asarray([x.theta for x in g.genes if x.is_rotation], dtype=float).tobytes()


# -- main loop ------------------------------------------------------------------------------
class _Run:
    def __init__(self, h, cfg, log_path, checkpoint_path, on_event, hamiltonian_label=None):
        self.h = h
        self.hamiltonian_label = hamiltonian_label
        self.cfg = cfg
        self.trainer = Trainer(h, cfg)
        self.records: list[dict] = []
        self.log_fh = open(log_path, "a") if log_path else None
        self.checkpoint_path = checkpoint_path
        self.on_event = on_event
        self.next_serial = 0
        self.rng = np.random.default_rng(cfg.seed)
        self.outer = 0
        self.inner = 0

    def close(self):
        if self.log_fh:
            self.log_fh.close()

    def emit(self, event: str, **data) -> None:
        rec = {"outer": self.outer, "inner": self.inner, "event": event, **data}
        self.records.append(rec)
        if self.log_fh:
            self.log_fh.write(json.dumps(rec) + "\n")
            self.log_fh.flush()
        if self.on_event:
            self.on_event(rec)

    def new(self, g: Genome, origin: str) -> Individual:
        ind = Individual(self.next_serial, g, origin=origin)
        self.next_serial += 1
        return ind

    def train(self, inds: list[Individual]) -> list[Individual]:
        failures = self.trainer.train_all(inds)
        bad = {id(i) for i, _ in failures}
        for ind, exc in failures:
            self.emit("train_failed", serial=ind.serial, genome=genome_hash(ind.genome), error=str(exc))
        ok = [i for i in inds if id(i) not in bad]
        for ind in ok:
            self.emit(
                "trained", serial=ind.serial, origin=ind.origin, genome=genome_hash(ind.genome),
                fitness=ind.fitness, n_rot=ind.genome.n_rotations, n_cx=ind.genome.n_cx,
            )
        return ok

    def elite(self, members: Iterable[Individual]) -> Individual:
        return rank(members)[0]

    def checkpoint(self, pop: list[Individual]) -> None:
        if not self.checkpoint_path:
            return
        doc = {
            "outer_done": self.outer + 1,
            "next_serial": self.next_serial,
            "rng_state": self.rng.bit_generator.state,
            "config": self.cfg.to_dict(runtime=False),
            "hamiltonian": self.hamiltonian_label,
            "population": [
                {"serial": m.serial, "fitness": m.fitness, "origin": m.origin, "genome": m.genome.to_dict()}
                for m in pop
            ],
        }
        tmp = Path(str(self.checkpoint_path) + ".tmp")
        tmp.write_text(json.dumps(doc, default=_json_default))
        tmp.replace(self.checkpoint_path)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(type(o))


def load_checkpoint(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def run_qceat(
    h: PauliHamiltonian,
    cfg: EvolutionConfig,
    *,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    resume: dict | None = None,
    on_event: Callable[[dict], None] | None = None,
    hamiltonian_label: str | None = None,
) -> QCEATResult:
    """Evolve circuit structures and angles for the ground state of ``h``.

    ``hamiltonian_label`` is stored in checkpoints so a resume can find ``h`` again.
    """
    run = _Run(h, cfg, log_path, checkpoint_path, on_event, hamiltonian_label)
    try:
        return _evolve(run, resume)
    finally:
        run.close()


def _intra_pairs(m: int, cfg: EvolutionConfig, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Pairs (i < j) chosen for intraspecies crossover, one coin per pair."""
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m) if rng.random() < cfg.p_cross_intra]
    if cfg.cap_intra_offspring and len(pairs) > m:
        pick = np.sort(rng.choice(len(pairs), size=m, replace=False))
        pairs = [pairs[k] for k in pick]
    return pairs


def _evolve(run: _Run, resume: dict | None) -> QCEATResult:
    cfg, n = run.cfg, run.h.n_qubits
    start_outer = 0
    if resume is None:
        run.emit("start", note=ELITISM_NOTE, config=cfg.to_dict(runtime=False))
        size = cfg.initial_population_size or n
        n_genes = cfg.initial_gene_count or n
        pop = [run.new(random_genome(n, n_genes, run.rng), "init") for _ in range(size)]
        pop = run.train(pop)
    else:
        start_outer = int(resume["outer_done"])
        run.next_serial = int(resume["next_serial"])
        run.rng.bit_generator.state = resume["rng_state"]
        pop = []
        for d in resume["population"]:
            ind = Individual(d["serial"], Genome.from_dict(d["genome"]), d["fitness"], origin=d.get("origin", "init"))
            run.trainer.cache[run.trainer._key(ind.genome)] = (ind.genome, ind.fitness, None)
            pop.append(ind)
        run.outer = start_outer
        run.emit("resume", outer_done=start_outer, population=len(pop))
    if not pop:
        raise RuntimeError("every initial circuit failed to train")

    population = Population([Species(pop)], start_outer, 0)
    for outer in range(start_outer, cfg.n_outer):
        run.outer, run.inner = outer, 0
        members = sorted(population.individuals, key=lambda m: m.serial)
        species = speciate(members, cfg.eta)
        run.emit("speciate", sizes=[len(s) for s in species])
        for inner in range(cfg.n_inner):
            run.inner = inner
            best = run.elite(m for s in species for m in s.members)
            evolved = []
            for s in species:
                new = []
                for ind in s.members:
                    child, action = mutate(ind.genome, cfg, run.rng)
                    if action is not None:
                        c = run.new(child, f"mut:{action}")
                        new.append(c)
                        run.emit("mutation", parent=ind.serial, child=c.serial, action=action)
                mutated = s.members + new
                for i, j in _intra_pairs(len(mutated), cfg, run.rng):
                    a, b = mutated[i], mutated[j]
                    c = run.new(crossover_intra(a.genome, b.genome), "cross_intra")
                    new.append(c)
                    run.emit("intra_crossover", parents=[a.serial, b.serial], child=c.serial)
                new = run.train(new)
                cross = Species(s.members + new)
                kept = select_cross_species(cross, protect=(best.serial,), dedupe=cfg.dedupe_structures)
                run.emit("select_species", before=len(cross), after=len(kept))
                evolved.append(kept)
            species = evolved
        run.inner = cfg.n_inner
        best = run.elite(m for s in species for m in s.members)
        offspring_by_species: list[list[Individual]] = [[] for _ in species]
        for si in range(len(species)):
            for sj in range(si + 1, len(species)):
                for a in species[si].members:
                    for b in species[sj].members:
                        if run.rng.random() < cfg.p_cross_inter:
                            c = run.new(crossover_inter(a.genome, b.genome, run.rng), "cross_inter")
                            offspring_by_species[si].append(c)
                            run.emit("inter_crossover", parents=[a.serial, b.serial], child=c.serial)
        flat = [c for group in offspring_by_species for c in group]
        trained_ok = {id(c) for c in run.train(flat)}
        merged = [
            Species(s.members + [c for c in group if id(c) in trained_ok])
            for s, group in zip(species, offspring_by_species)
        ]
        population = Population(merged, outer, cfg.n_inner)
        before = len(population)
        population = select_population(population, cfg.n_r, protect=(best.serial,),
                                       dedupe=cfg.dedupe_structures)
        best = run.elite(population.individuals)
        run.emit(
            "select_population", before=before, after=len(population),
            species_sizes=[len(s) for s in population.species],
            best_serial=best.serial, best_fitness=best.fitness,
            best_genome=genome_hash(best.genome), best_n_rot=best.genome.n_rotations,
            best_n_cx=best.genome.n_cx,
        )
        run.checkpoint(population.individuals)
    run.outer = cfg.n_outer
    best = rank(population.individuals, cfg.pick_tol)[0]
    run.emit("best", serial=best.serial, fitness=best.fitness, genome=best.genome.to_dict())
    return QCEATResult(best, population, run.records)
