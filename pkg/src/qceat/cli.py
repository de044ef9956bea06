"""Command-line front end: evolve, train-hea, sweep, report and diag.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .evolution import EvolutionConfig, run_qceat
from .genome import GenomeError, load_genome, save_genome
from .hamiltonians import (
    HamiltonianFormatError,
    PauliHamiltonian,
    build_heisenberg,
    exact_diagonalize,
    load_hamiltonian,
    shipped_path,
)
from .optimizer import TrainConfig, train_hea
from .robustness import (
    SweepCircuit,
    SweepError,
    SweepSpec,
    compare_report,
    hea_family,
    imperfection_sweep,
    qceat_family,
    read_csv,
    training_sweep,
    write_csv,
)
from .simulator import NoiseModel, evaluate


class ConfigError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


# -- shared helpers --------------------------------------------------------------------------
def resolve_hamiltonian(spec: str, base: Path | None = None) -> tuple[PauliHamiltonian, str]:
    """A file path, a shipped data name (``h2_sto3g``, ``h2o_8q``) or ``heisenberg:N[:J]``."""
    if spec.startswith("heisenberg:"):
        parts = spec.split(":")
        try:
            n = int(parts[1])
            j = float(parts[2]) if len(parts) > 2 else 1.0
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"bad Heisenberg spec {spec!r}; expected heisenberg:N[:J]") from exc
        return build_heisenberg(n, j), f"heisenberg{n}"
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    if path.is_file():
        return _load_h(path), path.stem
    name = Path(spec).name
    stem = name[:-5] if name.endswith(".json") else name
    shipped = shipped_path(stem + ".json")
    if "/" not in spec and shipped.is_file():
        return _load_h(shipped), stem
    raise ConfigError(f"Hamiltonian file not found: {path}")


def _load_h(path) -> PauliHamiltonian:
    try:
        return load_hamiltonian(path)
    except (HamiltonianFormatError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"invalid Hamiltonian file {path}: {exc}") from exc


def resolve_seed(flag: int | None, file_value: int | None = None) -> int:
    """--seed, else the config file's seed, else $QCEAT_SEED, else 0."""
    if flag is not None:
        return flag
    if file_value is not None:
        return int(file_value)
    env = os.environ.get("QCEAT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"QCEAT_SEED must be an integer, got {env!r}") from exc
    return 0


def _read_json(path: str | Path, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{what} {p} must hold a JSON object")
    return doc


def _parse_noise(text: str) -> NoiseModel:
    try:
        return NoiseModel.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o))


class Manifest:
    """Run record written before the run and finalized after it."""

    def __init__(self, out: Path, command: str, argv: list[str], config: dict, seed: int):
        self.path = out / "manifest.json"
        self.t0 = time.time()
        self.doc = {
            "command": command,
            "argv": argv,
            "config": config,
            "seed": seed,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "status": "running",
            "outputs": [],
        }
        _dump(self.path, self.doc)

    def finish(self, status: str, outputs: list[Path], error: str | None = None) -> None:
        self.doc.update(
            status=status,
            outputs=[str(p) for p in outputs],
            finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            wall_clock_s=round(time.time() - self.t0, 3),
        )
        if error:
            self.doc["error"] = error
        _dump(self.path, self.doc)


def _run_with_manifest(out: Path, command: str, argv: list[str], config: dict, seed: int, body) -> int:
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(out, command, argv, config, seed)
    try:
        outputs = body()
    except Exception as exc:
        man.finish("failed", [], f"{type(exc).__name__}: {exc}")
        raise
    man.finish("ok", outputs + [man.path])
    return 0


def _threads(value: int | None) -> int:
    t = value if value is not None else (os.cpu_count() or 1)
    if t < 1:
        raise ConfigError("--threads must be positive")
    return t


# -- commands -----------------------------------------------------------------------------------
def cmd_diag(args) -> int:
    h, name = resolve_hamiltonian(args.hamiltonian)
    gs = exact_diagonalize(h)
    doc = {
        "hamiltonian": name,
        "n_qubits": h.n_qubits,
        "n_terms": len(h.terms),
        "ground_energy": gs.energy,
        "degenerate": gs.degenerate,
        "ground_space_dim": int(gs.ground_space.shape[1]),
        "spectrum_min": gs.spectrum_min,
        "spectrum_max": gs.spectrum_max,
    }
    if h.reference_ground_energy is not None:
        doc["reference_ground_energy"] = h.reference_ground_energy
    print(json.dumps(doc, indent=1))
    return 0


def cmd_train_hea(args, argv) -> int:
    h, name = resolve_hamiltonian(args.hamiltonian)
    if h.n_qubits != args.n_qubits:
        raise ConfigError(f"{name} acts on {h.n_qubits} qubits, not {args.n_qubits}")
    if args.n_layers < 1 or args.n_qubits < 2:
        raise ConfigError("HEA needs n_qubits >= 2 and n_layers >= 1")
    if args.restarts < 1 or args.max_iters < 1:
        raise ConfigError("--restarts and --max-iters must be positive")
    seed = resolve_seed(args.seed)
    noise = _parse_noise(args.noise)
    cfg = TrainConfig(max_iters=args.max_iters, noise=noise, seed=seed)
    out = Path(args.out)
    config = {"hamiltonian": name, "n_qubits": args.n_qubits, "n_layers": args.n_layers,
              "noise": noise.label(), "restarts": args.restarts, "max_iters": args.max_iters}

    def body():
        g, result = train_hea(h, args.n_layers, cfg, restarts=args.restarts)
        gs = exact_diagonalize(h)
        ev = evaluate(g, h, gs, noise, np.random.default_rng([seed, 2]))
        gpath = out / "genome.json"
        save_genome(g, gpath, hamiltonian=name, noise=noise.label(), train_cost=result.best_cost,
                    energy=ev["energy"], fidelity=ev["fidelity"], exact_energy=gs.energy)
        hist = out / "training.csv"
        result.write_csv(hist)
        print(f"HEA({args.n_qubits},{args.n_layers}) on {name} [{noise.label()}]: "
              f"E={ev['energy'][0]:.10f} (exact {gs.energy:.10f}, error {ev['energy'][0] - gs.energy:.2e}) "
              f"F={ev['fidelity'][0]:.6f} params={g.n_rotations} CX={g.n_cx}")
        return [gpath, hist]

    return _run_with_manifest(out, "train-hea", argv, config, seed, body)


def _evolution_config(args) -> tuple[EvolutionConfig, int]:
    doc = _read_json(args.config, "config file") if args.config else {}
    tc = dict(doc.pop("train_cfg", {}) or {})
    if args.noise is not None:
        tc["noise"] = args.noise
    if args.max_iters is not None:
        tc["max_iters"] = args.max_iters
    for flag, key in (("n_outer", "n_outer"), ("n_inner", "n_inner"), ("n_r", "n_r")):
        if getattr(args, flag) is not None:
            doc[key] = getattr(args, flag)
    seed = resolve_seed(args.seed, doc.get("seed"))
    doc["seed"] = seed
    doc["threads"] = _threads(args.threads)
    doc["train_cfg"] = tc
    try:
        return EvolutionConfig.from_dict(doc), seed
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid evolution config: {exc}") from exc


def cmd_evolve(args, argv) -> int:
    out = Path(args.out)
    resume = None
    if args.resume:
        resume = _read_json(args.resume, "checkpoint")
        for key in ("outer_done", "next_serial", "rng_state", "config", "population"):
            if key not in resume:
                raise ConfigError(f"checkpoint {args.resume} lacks {key!r}")
        try:
            cfg = EvolutionConfig.from_dict(resume["config"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"checkpoint config invalid: {exc}") from exc
        cfg = replace(cfg, threads=_threads(args.threads))
        if args.n_outer is not None:
            cfg = replace(cfg, n_outer=args.n_outer)
        seed = cfg.seed
        hname = resume.get("hamiltonian", args.hamiltonian)
        if hname is None:
            raise ConfigError("--hamiltonian is required (checkpoint does not name one)")
    else:
        if args.hamiltonian is None:
            raise ConfigError("--hamiltonian is required")
        cfg, seed = _evolution_config(args)
        hname = args.hamiltonian
    h, name = resolve_hamiltonian(hname)
    cfg_doc = cfg.to_dict()
    cfg_doc["train_cfg"]["noise"] = cfg.train_cfg.noise.label()
    config = {"hamiltonian": hname, "evolution": cfg_doc}

    def body():
        log_path = out / "log.jsonl"
        ckpt = out / "checkpoint.json"
        if resume is None and log_path.exists():
            log_path.unlink()
        res = run_qceat(h, cfg, log_path=log_path, checkpoint_path=ckpt, resume=resume,
                        hamiltonian_label=hname)
        gs = exact_diagonalize(h)
        b = res.best.genome
        noise = cfg.train_cfg.noise
        ev = evaluate(b, h, gs, noise, np.random.default_rng([seed, 3]))
        gpath = out / "best_genome.json"
        save_genome(b, gpath, hamiltonian=name, noise=noise.label(), fitness=res.best.fitness,
                    energy=ev["energy"], fidelity=ev["fidelity"], exact_energy=gs.energy,
                    n_rot=b.n_rotations, n_cx=b.n_cx)
        print(f"QCEAT on {name} [{noise.label()}]: fitness={res.best.fitness:.10f} "
              f"F={ev['fidelity'][0]:.6f} #R={b.n_rotations} #CX={b.n_cx}")
        print(b)
        return [gpath, log_path, ckpt]

    return _run_with_manifest(out, "evolve", argv, config, seed, body)


def _floats(xs, what: str) -> list[float]:
    try:
        return [float(x) for x in xs]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be a list of numbers") from exc


def build_sweep(doc: dict, base: Path, seed: int, out: Path | None = None):
    """Turn a sweep document into (Hamiltonian, name, SweepSpec, mode); trains circuits as needed."""
    for key in ("hamiltonian", "axis", "circuits"):
        if key not in doc:
            raise ConfigError(f"sweep spec lacks {key!r}")
    h, name = resolve_hamiltonian(doc["hamiltonian"], base)
    axis = doc["axis"]
    if axis not in ("coherent", "incoherent"):
        raise ConfigError(f"axis must be 'coherent' or 'incoherent', got {axis!r}")
    train_points = _floats(doc.get("train_points", [0.0]), "train_points")
    mode = doc.get("mode", "training")
    if mode not in ("training", "imperfection", "both"):
        raise ConfigError(f"mode must be training, imperfection or both, got {mode!r}")
    pending = []
    for c in doc["circuits"]:
        if "label" not in c or "source" not in c:
            raise ConfigError("every circuit needs 'label' and 'source'")
        pts = _floats(c["train_points"], "train_points") if "train_points" in c else None
        src = c["source"]
        if src == "file":
            trained = {}
            for k, rel in (c.get("genomes") or {}).items():
                p = Path(rel)
                p = p if p.is_absolute() else base / p
                if not p.is_file():
                    raise ConfigError(f"genome file not found: {p}")
                try:
                    g = load_genome(p)
                except (GenomeError, json.JSONDecodeError) as exc:
                    raise ConfigError(f"invalid genome file {p}: {exc}") from exc
                if g.n_qubits != h.n_qubits:
                    raise ConfigError(f"{p}: {g.n_qubits} qubits, Hamiltonian has {h.n_qubits}")
                trained[float(k)] = g
            pending.append(("ready", SweepCircuit(c["label"], trained, tuple(pts) if pts else None)))
        elif src in ("hea", "qceat"):
            pending.append((src, c, pts))
        else:
            raise ConfigError(f"unknown circuit source {src!r}")
    try:
        # validate grids before any training
        SweepSpec(axis, tuple(train_points), tuple(), doc.get("eval_grid"),
                  int(doc.get("n_eval_samples", 10_000)), seed)
    except (SweepError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    def materialize() -> SweepSpec:
        circuits = []
        for item in pending:
            if item[0] == "ready":
                circuits.append(item[1])
                continue
            src, c, pts = item
            pts = pts if pts is not None else train_points
            if src == "hea":
                tc = TrainConfig(max_iters=int(c.get("max_iters", 500)), seed=seed)
                fam = hea_family(h, c["label"], int(c.get("n_layers", 2)), axis, pts, tc,
                                 restarts=int(c.get("restarts", 8)))
            else:
                ecfg = EvolutionConfig.from_dict({**(c.get("config") or {}), "seed": seed})
                fam = qceat_family(h, c["label"], axis, pts, ecfg)
            if out is not None:
                (out / "circuits").mkdir(parents=True, exist_ok=True)
                for tp, g in fam.trained.items():
                    save_genome(g, out / "circuits" / f"{c['label']}_{axis}_{tp:g}.json",
                                label=c["label"], axis=axis, train_point=tp)
            circuits.append(fam)
        return SweepSpec(axis, tuple(train_points), tuple(circuits), doc.get("eval_grid"),
                         int(doc.get("n_eval_samples", 10_000)), seed)

    return h, name, materialize, mode


def cmd_sweep(args, argv) -> int:
    doc = _read_json(args.spec, "sweep spec")
    seed = resolve_seed(args.seed, doc.get("seed"))
    threads = _threads(args.threads)
    out = Path(args.out)
    h, name, materialize, mode = build_sweep(doc, Path(args.spec).resolve().parent, seed, out)

    def body():
        spec = materialize()
        gs = exact_diagonalize(h)
        outputs = []
        records = []
        if mode in ("imperfection", "both"):
            recs = imperfection_sweep(spec, h, gs, threads)
            p = out / "imperfection.csv"
            write_csv(recs, p)
            outputs.append(p)
            records += recs
        if mode in ("training", "both"):
            recs = training_sweep(spec, h, gs, threads)
            p = out / "training.csv"
            write_csv(recs, p)
            outputs.append(p)
            records = recs
        baseline = doc.get("baseline")
        if baseline:
            outputs += compare_report(records, baseline).write(out / "report", name)
        print(f"sweep on {name} [{spec.axis}]: {len(records)} records -> {out}")
        return outputs

    return _run_with_manifest(out, "sweep", argv, doc, seed, body)


def cmd_report(args, argv) -> int:
    records = []
    for path in args.csv:
        if not Path(path).is_file():
            raise ConfigError(f"records file not found: {path}")
        try:
            records += read_csv(path)
        except (SweepError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid records file {path}: {exc}") from exc
    try:
        report = compare_report(records, args.baseline)
    except SweepError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    model = args.model or Path(args.csv[0]).stem

    def body():
        paths = report.write(out, model)
        print(report.to_text())
        return paths

    return _run_with_manifest(out, "report", argv, {"csv": args.csv, "baseline": args.baseline},
                              0, body)


# -- entry point -------------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qceat", description="Evolve and benchmark noise-robust VQE circuits.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("diag", help="exact diagonalization of a Hamiltonian")
    d.add_argument("hamiltonian", help="file path, shipped name (h2_sto3g, h2o_8q) or heisenberg:N[:J]")

    t = sub.add_parser("train-hea", help="train a hardware-efficient ansatz")
    t.add_argument("n_qubits", type=int)
    t.add_argument("n_layers", type=int)
    t.add_argument("--hamiltonian", required=True)
    t.add_argument("--noise", default="none", help="none | coherent:DELTA | incoherent:P")
    t.add_argument("--seed", type=int)
    t.add_argument("--restarts", type=int, default=8, help="random starts; the lowest cost wins")
    t.add_argument("--max-iters", type=int, default=500)
    t.add_argument("--out", default="runs/hea")

    e = sub.add_parser("evolve", help="run QCEAT")
    e.add_argument("--hamiltonian")
    e.add_argument("--config", help="JSON file with EvolutionConfig fields; flags override it")
    e.add_argument("--noise", help="none | coherent:DELTA | incoherent:P")
    e.add_argument("--seed", type=int)
    e.add_argument("--n-outer", type=int)
    e.add_argument("--n-inner", type=int)
    e.add_argument("--n-r", type=int)
    e.add_argument("--max-iters", type=int)
    e.add_argument("--threads", type=int, help="training workers (default: all cores)")
    e.add_argument("--resume", help="checkpoint.json of an earlier run")
    e.add_argument("--out", default="runs/evolve")

    s = sub.add_parser("sweep", help="robustness sweep from a JSON spec")
    s.add_argument("spec")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", default="runs/sweep")

    r = sub.add_parser("report", help="compare sweep records against a baseline")
    r.add_argument("csv", nargs="+")
    r.add_argument("--baseline", required=True)
    r.add_argument("--model", help="name used in plot titles and file names")
    r.add_argument("--out", default="runs/report")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    handlers = {
        "diag": lambda: cmd_diag(args),
        "train-hea": lambda: cmd_train_hea(args, argv),
        "evolve": lambda: cmd_evolve(args, argv),
        "sweep": lambda: cmd_sweep(args, argv),
        "report": lambda: cmd_report(args, argv),
    }
    try:
        return handlers[args.command]()
    except ConfigError as exc:
        print(f"qceat: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("qceat: interrupted", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"qceat: {args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
