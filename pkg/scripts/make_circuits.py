"""Evolve the reference QCEAT circuits shipped in ``qceat/data/circuits``.

One QCEAT run (default settings, fixed seed) per model and training noise level:
H2 and the 4-site Heisenberg chain, on the coherent and the dephasing axis.

    python scripts/make_circuits.py --out src/qceat/data/circuits --seed 0
"""
from __future__ import annotations

import argparse
import time
from dataclasses import replace
from pathlib import Path

from qceat.evolution import EvolutionConfig, run_qceat
from qceat.genome import save_genome, shipped_circuit_path
from qceat.hamiltonians import build_heisenberg, exact_diagonalize, load_hamiltonian, shipped_path
from qceat.robustness import noise_at
from qceat.simulator import fidelity_incoherent

MODELS = {
    "h2": lambda: load_hamiltonian(shipped_path("h2_sto3g.json")),
    "heisenberg4": lambda: build_heisenberg(4),
}
LEVELS = {"coherent": (0.0, 0.1, 0.2), "incoherent": (0.0, 0.05, 0.1)}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("src/qceat/data/circuits"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", nargs="*", default=list(MODELS))
    ap.add_argument("--axes", nargs="*", default=list(LEVELS))
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for model in args.models:
        h = MODELS[model]()
        gs = exact_diagonalize(h)
        for axis in args.axes:
            for level in LEVELS[axis]:
                base = EvolutionConfig(seed=args.seed)
                cfg = replace(base, train_cfg=replace(base.train_cfg, noise=noise_at(axis, level)))
                t0 = time.time()
                best = run_qceat(h, cfg).best
                g = best.genome
                save_genome(
                    g, args.out / shipped_circuit_path(model, axis, level).name,
                    model=model, axis=axis, train_point=level, seed=args.seed,
                    fitness=best.fitness, ground_energy=gs.energy,
                    fidelity_noiseless=fidelity_incoherent(g, gs, 0.0),
                )
                print(f"{model} {axis} {level:g}: {g.n_rotations} R, {g.n_cx} CX, "
                      f"E - E0 = {best.fitness - gs.energy:.3e}, {time.time() - t0:.0f} s", flush=True)


if __name__ == "__main__":
    main()
