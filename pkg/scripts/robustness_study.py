"""Compare QCEAT against the hardware-efficient ansatz on both noise axes.

For each model and axis: train HEA at every training level, take the QCEAT
circuits (shipped ones by default, or fresh runs with --evolve), run the
training-robustness sweep and write CSV records, comparison tables and SVGs.

    python scripts/robustness_study.py --out runs/study
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from qceat.evolution import EvolutionConfig
from qceat.genome import load_genome, shipped_circuit_path
from qceat.hamiltonians import build_heisenberg, exact_diagonalize, load_hamiltonian, shipped_path
from qceat.optimizer import TrainConfig
from qceat.robustness import (
    SweepCircuit,
    SweepSpec,
    compare_report,
    hea_family,
    imperfection_sweep,
    qceat_family,
    training_sweep,
    write_csv,
)

MODELS = {
    "h2": (lambda: load_hamiltonian(shipped_path("h2_sto3g.json")), 2),
    "heisenberg4": (lambda: build_heisenberg(4), 3),
}
LEVELS = {"coherent": (0.0, 0.1, 0.2), "incoherent": (0.0, 0.05, 0.1)}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/study"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--models", nargs="*", default=list(MODELS))
    ap.add_argument("--axes", nargs="*", default=list(LEVELS))
    ap.add_argument("--evolve", action="store_true", help="run QCEAT instead of loading shipped circuits")
    ap.add_argument("--samples", type=int, default=10_000, help="Monte Carlo samples per coherent point")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    for name in args.models:
        build, n_layers = MODELS[name]
        h = build()
        gs = exact_diagonalize(h)
        for axis in args.axes:
            t0 = time.time()
            levels = LEVELS[axis]
            hea = hea_family(h, "HEA", n_layers, axis, levels, TrainConfig(seed=args.seed))
            if args.evolve:
                qc = qceat_family(h, "QCEAT", axis, levels, EvolutionConfig(seed=args.seed))
            else:
                qc = SweepCircuit("QCEAT", {lv: load_genome(shipped_circuit_path(name, axis, lv))
                                            for lv in levels})
            spec = SweepSpec(axis, levels, (qc, hea), None, args.samples, args.seed)
            out = args.out / f"{name}_{axis}"
            out.mkdir(parents=True, exist_ok=True)
            tr = training_sweep(spec, h, gs, args.threads)
            write_csv(tr, out / "training.csv")
            write_csv(imperfection_sweep(spec, h, gs, args.threads), out / "imperfection.csv")
            report = compare_report(tr, "HEA")
            report.write(out, name)
            print(f"== {name} / {axis} ({time.time() - t0:.0f} s)")
            print(report.gate_table())
            print()


if __name__ == "__main__":
    main()
