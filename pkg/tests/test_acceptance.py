"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

QCEAT runs use the default EvolutionConfig with seed 0 and are shared between
criteria through a module-level cache. Nothing here reads the shipped circuits.
"""
import itertools
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from qceat.cli import main
from qceat.evolution import EvolutionConfig, edit_distance, mutate, run_qceat, speciate
from qceat.genome import Gene, build_hea, pack, random_genome, set_parameters
from qceat.hamiltonians import (
    PauliHamiltonian,
    build_heisenberg,
    exact_diagonalize,
    load_hamiltonian,
    shipped_path,
)
from qceat.optimizer import TrainConfig, gradient, train_hea
from qceat.robustness import DELTA_GRID, SweepCircuit, SweepSpec, noise_at, training_sweep
from qceat.simulator import (
    NoiseModel,
    energy_incoherent,
    fidelity_coherent,
    fidelity_incoherent,
    run_mixed,
)
from test_evolution import brute_edit, reference_speciate
from test_optimizer import finite_difference
from test_simulator import apply_superoperator, superoperator

SEED = 0
P_CHECK = (0.02, 0.04, 0.06, 0.08, 0.1)


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[acceptance] criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, detail


MODELS = {
    "h2": lambda: load_hamiltonian(shipped_path("h2_sto3g.json")),
    "heisenberg4": lambda: build_heisenberg(4),
    "h2o": lambda: load_hamiltonian(shipped_path("h2o_8q.json")),
}
HEA_LAYERS = {"h2": 2, "heisenberg4": 3}
_models: dict = {}
_runs: dict = {}
_heas: dict = {}


def model(name):
    if name not in _models:
        h = MODELS[name]()
        _models[name] = (h, exact_diagonalize(h))
    return _models[name]


def qceat(name: str, axis: str, level: float, **overrides):
    """Best genome and wall time of one default QCEAT run, cached per (model, axis, level)."""
    key = (name, axis, level, tuple(sorted(overrides.items())))
    if key not in _runs:
        h, _ = model(name)
        base = EvolutionConfig(seed=SEED, **overrides)
        cfg = replace(base, train_cfg=replace(base.train_cfg, noise=noise_at(axis, level)))
        t0 = time.perf_counter()
        g = run_qceat(h, cfg).best.genome
        _runs[key] = (g, time.perf_counter() - t0)
    return _runs[key]


def hea_noiseless(name: str):
    if name not in _heas:
        h, _ = model(name)
        _heas[name] = train_hea(h, HEA_LAYERS[name], TrainConfig(seed=SEED), restarts=8)[0]
    return _heas[name]


# -- 1 -------------------------------------------------------------------------------------
def test_criterion_1_noiseless_hea_baseline(tmp_path, capsys):
    results = []
    for n_layers, ham, name in ((2, "h2_sto3g", "h2"), (3, "heisenberg:4", "heisenberg4")):
        out = tmp_path / name
        t0 = time.perf_counter()
        code = main(["train-hea", "4", str(n_layers), "--hamiltonian", ham, "--seed", str(SEED),
                     "--out", str(out)])
        dt = time.perf_counter() - t0
        doc = json.loads((out / "genome.json").read_text()) if code == 0 else {}
        results.append((code, doc, dt))
    (c1, d1, t1), (c2, d2, t2) = results
    err = abs(d1["energy"][0] - d1["exact_energy"]) if c1 == 0 else math.inf
    fid = d2["fidelity"][0] if c2 == 0 else 0.0
    ok = err <= 1.6e-3 and fid >= 0.99 and t1 < 120 and t2 < 120
    verdict(capsys, 1, ok, f"H2 HEA(4,2) |E-E0|={err:.2e} Ha in {t1:.1f}s; "
                           f"Heisenberg HEA(4,3) F={fid:.5f} in {t2:.1f}s")


# -- 2 -------------------------------------------------------------------------------------
def test_criterion_2_coherent_gate_counts(capsys):
    _, gs = model("h2")
    parts, ok = [], True
    for level in (0.0, 0.1, 0.2):
        g, dt = qceat("h2", "coherent", level)
        f, _ = fidelity_coherent(g, gs, level, 10_000, np.random.default_rng([SEED, 2]))
        ok &= g.n_rotations <= 10 and g.n_cx <= 6 and f >= 0.95 and dt < 1800
        parts.append(f"D_t={level:g}: {g.n_rotations}R/{g.n_cx}CX F={f:.4f} {dt:.0f}s")
    verdict(capsys, 2, ok, "H2; " + "; ".join(parts))


# -- 3 -------------------------------------------------------------------------------------
def test_criterion_3_incoherent_cx_counts(capsys):
    hea_cx = build_hea(4, 3).n_cx
    parts, ok = [], hea_cx == 9
    for level in (0.05, 0.1):
        g, dt = qceat("heisenberg4", "incoherent", level)
        ok &= g.n_cx < hea_cx and g.n_cx <= 6
        parts.append(f"p_t={level:g}: {g.n_rotations}R/{g.n_cx}CX {dt:.0f}s")
    verdict(capsys, 3, ok, f"Heisenberg, HEA(4,3) has {hea_cx} CX; " + "; ".join(parts))


# -- 4 -------------------------------------------------------------------------------------
def test_criterion_4_dephasing_robustness_ordering(capsys):
    parts, ok = [], True
    for name in ("h2", "heisenberg4"):
        _, gs = model(name)
        g, _ = qceat(name, "incoherent", 0.05)
        hea = hea_noiseless(name)
        fq = [fidelity_incoherent(g, gs, p) for p in P_CHECK]
        fh = [fidelity_incoherent(hea, gs, p) for p in P_CHECK]
        ok &= all(a >= b for a, b in zip(fq, fh))
        margin = min(a - b for a, b in zip(fq, fh))
        parts.append(f"{name}: F_QCEAT {fq[0]:.4f}->{fq[-1]:.4f}, F_HEA {fh[0]:.4f}->{fh[-1]:.4f}, "
                     f"min margin {margin:+.4f}")
    verdict(capsys, 4, ok, "; ".join(parts))


# -- 5 -------------------------------------------------------------------------------------
def test_criterion_5_training_robustness_flatness(capsys):
    h, gs = model("h2")
    levels = (0.0, 0.1, 0.2)
    fam = SweepCircuit("QCEAT", {lv: qceat("h2", "coherent", lv)[0] for lv in levels})
    hea = SweepCircuit("HEA", {0.0: hea_noiseless("h2")}, (0.0,))
    spec = SweepSpec("coherent", levels, (fam, hea), DELTA_GRID, 10_000, SEED)
    recs = training_sweep(spec, h, gs)
    by = {(r.label, r.train_point, r.eval_point): r.fidelity_mean for r in recs}
    spreads, ok = [], True
    for d in DELTA_GRID:
        fs = [by[("QCEAT", lv, d)] for lv in levels]
        spreads.append(max(fs) - min(fs))
        ok &= spreads[-1] <= 0.1
        if d >= 0.1 - 1e-12:
            ok &= all(f > by[("HEA", 0.0, d)] for f in fs)
    worst = min(min(by[("QCEAT", lv, d)] for lv in levels) - by[("HEA", 0.0, d)]
                for d in DELTA_GRID if d >= 0.1 - 1e-12)
    verdict(capsys, 5, ok, f"H2 max spread {max(spreads):.4f} (bound 0.1); "
                           f"min QCEAT-HEA margin for D>=0.1 {worst:+.4f}")


# -- 6 -------------------------------------------------------------------------------------
def test_criterion_6_simulator_oracles(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    rho0 = np.zeros((8, 8), dtype=complex)
    rho0[0, 0] = 1
    sup_err = 0.0
    for _ in range(50):
        g = random_genome(3, 10, rng)
        p = float(rng.uniform())
        want = apply_superoperator(superoperator(g, p, "input"), rho0)
        sup_err = max(sup_err, float(np.max(np.abs(run_mixed(g, p=p) - want))))

    grad_err = 0.0
    letters = list("IXYZ")
    for k in range(16):
        g = random_genome(3, 10, rng)
        if g.n_rotations == 0:
            continue
        h = random_hamiltonian(rng, letters)
        theta = rng.uniform(0, 2 * math.pi, g.n_rotations)
        p = 0.0 if k % 2 == 0 else 0.05

        def cost(t):
            return energy_incoherent(set_parameters(g, t), h, p)

        fd = finite_difference(cost, theta)
        shift = gradient(g, h, NoiseModel(p=p), theta, method="shift")
        grad_err = max(grad_err, float(np.linalg.norm(shift - fd) / max(np.linalg.norm(fd), 1e-3)))

    trace_err = herm_err = 0.0
    min_eig = 1.0
    for _ in range(1000):
        g = random_genome(3, 10, rng)
        rho = run_mixed(g, p=float(rng.uniform()))
        trace_err = max(trace_err, abs(np.trace(rho) - 1))
        herm_err = max(herm_err, float(np.max(np.abs(rho - rho.conj().T))))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(rho).min()))
    dt = time.perf_counter() - t0
    ok = sup_err < 1e-10 and grad_err < 1e-6 and trace_err < 1e-12 and herm_err < 1e-12 \
        and min_eig >= -1e-9 and dt < 60
    verdict(capsys, 6, ok, f"superoperator err {sup_err:.1e}; shift vs FD rel err {grad_err:.1e}; "
                           f"trace err {trace_err:.1e}, Hermitian err {herm_err:.1e}, "
                           f"min eigenvalue {min_eig:.1e}; {dt:.1f}s")


def random_hamiltonian(rng, letters):
    terms = [("".join(rng.choice(letters, 3)), float(rng.normal())) for _ in range(5)]
    return PauliHamiltonian.from_terms(3, terms)


# -- 7 -------------------------------------------------------------------------------------
def test_criterion_7_evolution_operator_statistics(capsys):
    cfg = EvolutionConfig()
    rng = np.random.default_rng(7)
    g = pack(3, [Gene("RX", (0,), 0.1), Gene("CX", (0, 1)), Gene("RZ", (2,), 0.2), Gene("RX", (1,), 0.3)])
    counts = {None: 0, "add": 0, "sub": 0, "del": 0}
    n = 10_000
    for _ in range(n):
        counts[mutate(g, cfg, rng)[1]] += 1
    fired = n - counts[None]
    rates = (fired / n, counts["add"] / fired, counts["sub"] / fired, counts["del"] / fired)
    ok = all(abs(r - t) <= 0.02 for r, t in zip(rates, (0.7, 0.625, 0.25, 0.125)))

    keys = [("RX", (0,)), ("RZ", (1,)), ("CX", (0, 1))]
    seqs = [s for k in range(6) for s in itertools.product(keys, repeat=k)]
    mismatches = sum(edit_distance(a, b) != brute_edit(a, b) for a in seqs for b in seqs)
    ok &= mismatches == 0

    rng = np.random.default_rng(42)
    bad_partitions = 0
    for _ in range(1000):
        gs = [random_genome(3, int(rng.integers(1, 7)), rng) for _ in range(int(rng.integers(1, 12)))]
        eta = float(rng.choice([0.1, 0.3, 0.5, 0.8]))
        ids = {id(x): k for k, x in enumerate(gs)}
        got = [[ids[id(m)] for m in s.members] for s in speciate(gs, eta)]
        bad_partitions += got != reference_speciate(gs, eta)
    ok &= bad_partitions == 0
    verdict(capsys, 7, ok, f"fire {rates[0]:.4f}, add/sub/del {rates[1]:.4f}/{rates[2]:.4f}/{rates[3]:.4f}; "
                           f"edit distance mismatches {mismatches} of {len(seqs) ** 2}; "
                           f"speciation mismatches {bad_partitions} of 1000")


# -- 8 -------------------------------------------------------------------------------------
def test_criterion_8_thread_count_determinism(tmp_path, capsys):
    same = {}
    for threads in ("1", "3"):
        code = main(["evolve", "--hamiltonian", "h2_sto3g", "--noise", "coherent:0.1", "--seed", "8",
                     "--n-outer", "2", "--n-inner", "2", "--max-iters", "100", "--threads", threads,
                     "--out", str(tmp_path / f"ev{threads}")])
        assert code == 0
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({
            "hamiltonian": "h2_sto3g", "axis": "coherent", "train_points": [0.0, 0.1],
            "mode": "both", "n_eval_samples": 2000,
            "circuits": [{"label": "HEA", "source": "hea", "n_layers": 1, "max_iters": 100, "restarts": 2}],
        }))
        assert main(["sweep", str(spec), "--seed", "8", "--threads", threads,
                     "--out", str(tmp_path / f"sw{threads}")]) == 0
    files = [("ev", "best_genome.json"), ("ev", "log.jsonl"), ("ev", "checkpoint.json"),
             ("sw", "training.csv"), ("sw", "imperfection.csv"),
             ("sw", "circuits/HEA_coherent_0.json"), ("sw", "circuits/HEA_coherent_0.1.json")]
    for kind, name in files:
        same[f"{kind}/{name}"] = ((tmp_path / f"{kind}1" / name).read_bytes()
                                  == (tmp_path / f"{kind}3" / name).read_bytes())
    ok = all(same.values())
    diff = [k for k, v in same.items() if not v]
    verdict(capsys, 8, ok, f"{len(files)} outputs compared between 1 and 3 threads; differing: {diff or 'none'}")


# -- 9 -------------------------------------------------------------------------------------
def test_criterion_9_eight_qubit_smoke(capsys):
    h, _ = model("h2o")
    hea = build_hea(8, 2, np.random.default_rng(9).uniform(0, 2 * math.pi, 48))
    t0 = time.perf_counter()
    e = energy_incoherent(hea, h, 0.05)
    t_eval = time.perf_counter() - t0
    g, dt = qceat("h2o", "incoherent", 0.05, n_outer=3)
    ok = hea.n_cx == 14 and hea.n_rotations == 48 and math.isfinite(e) and t_eval < 10 and g.n_cx < 14
    verdict(capsys, 9, ok, f"HEA(8,2) dephased energy eval {t_eval:.3f}s; QCEAT n_outer=3 "
                           f"{g.n_rotations}R/{g.n_cx}CX in {dt:.0f}s (HEA(8,2) has {hea.n_cx} CX)")


@pytest.fixture(autouse=True, scope="module")
def _clear_cache():
    yield
    _runs.clear()
    _heas.clear()
