"""Regenerate the shipped qubit Hamiltonians from electronic-structure integrals.

Requires pyscf (not a runtime dependency of the package). Spin orbitals are
interleaved (alpha_0, beta_0, alpha_1, ...) and mapped to qubits with the
Jordan-Wigner transform, qubit 0 being the leftmost Pauli letter.

    python scripts/make_hamiltonians.py --out src/qceat/data
"""
from __future__ import annotations

import argparse
import itertools
import json
from pathlib import Path

import numpy as np
from pyscf import ao2mo, gto, mcscf, scf

from qceat.hamiltonians import PauliHamiltonian, exact_diagonalize

# single-qubit Pauli products: (a, b) -> (phase, c)
_MUL = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


def _mul_ops(a: dict, b: dict) -> dict:
    out: dict = {}
    for (sa, ca), (sb, cb) in itertools.product(a.items(), b.items()):
        phase = 1
        letters = []
        for x, y in zip(sa, sb):
            ph, z = _MUL[(x, y)]
            phase *= ph
            letters.append(z)
        key = "".join(letters)
        out[key] = out.get(key, 0) + phase * ca * cb
    return out


def _ladder(j: int, n: int, dagger: bool) -> dict:
    z = "Z" * j
    rest = "I" * (n - j - 1)
    sign = -1j if dagger else 1j
    return {z + "X" + rest: 0.5, z + "Y" + rest: 0.5 * sign}


def jordan_wigner(ecore: float, h1: np.ndarray, eri: np.ndarray) -> dict:
    """Qubit operator of a spin-orbital Hamiltonian.

    ``eri[p, q, r, s]`` is the physicist-order integral <pq|rs>; the operator is
    ``ecore + h1[p,q] a+_p a_q + 1/2 <pq|rs> a+_p a+_q a_s a_r``.
    """
    n = h1.shape[0]
    ops = [(_ladder(j, n, True), _ladder(j, n, False)) for j in range(n)]
    total: dict = {"I" * n: complex(ecore)}

    def add(term: dict, c: float) -> None:
        for k, v in term.items():
            total[k] = total.get(k, 0) + c * v

    for p, q in itertools.product(range(n), repeat=2):
        if abs(h1[p, q]) > 1e-12:
            add(_mul_ops(ops[p][0], ops[q][1]), h1[p, q])
    for p, q, r, s in itertools.product(range(n), repeat=4):
        c = 0.5 * eri[p, q, r, s]
        if abs(c) > 1e-12 and p != q and r != s:
            t = _mul_ops(_mul_ops(ops[p][0], ops[q][0]), _mul_ops(ops[s][1], ops[r][1]))
            add(t, c)
    out = {}
    for k, v in total.items():
        assert abs(v.imag) < 1e-10, (k, v)
        if abs(v.real) > 1e-10:
            out[k] = float(v.real)
    return out


def spin_orbital_integrals(h1_mo: np.ndarray, eri_mo: np.ndarray):
    """Expand spatial MO integrals (chemist order) into interleaved spin orbitals."""
    m = h1_mo.shape[0]
    n = 2 * m
    h1 = np.zeros((n, n))
    g = np.zeros((n, n, n, n))
    for p, q in itertools.product(range(n), repeat=2):
        if p % 2 == q % 2:
            h1[p, q] = h1_mo[p // 2, q // 2]
    for p, q, r, s in itertools.product(range(n), repeat=4):
        # <pq|rs> = (pr|qs)
        if p % 2 == r % 2 and q % 2 == s % 2:
            g[p, q, r, s] = eri_mo[p // 2, r // 2, q // 2, s // 2]
    return h1, g


def h2_sto3g(bond: float = 0.7414):
    mol = gto.M(atom=f"H 0 0 0; H 0 0 {bond}", basis="sto-3g", unit="Angstrom")
    mf = scf.RHF(mol).run(verbose=0)
    c = mf.mo_coeff
    h1_mo = c.T @ mf.get_hcore() @ c
    eri_mo = ao2mo.restore(1, ao2mo.kernel(mol, c), c.shape[1])
    fci = mcscf.CASCI(mf, 2, 2).run(verbose=0).e_tot
    return mol.energy_nuc(), h1_mo, eri_mo, fci, mf.e_tot


def h2o_cas44(r_oh: float = 0.9584, angle: float = 104.45):
    half = np.deg2rad(angle / 2)
    geom = (
        f"O 0 0 0; H 0 {r_oh * np.sin(half):.8f} {r_oh * np.cos(half):.8f}; "
        f"H 0 {-r_oh * np.sin(half):.8f} {r_oh * np.cos(half):.8f}"
    )
    mol = gto.M(atom=geom, basis="sto-3g", unit="Angstrom")
    mf = scf.RHF(mol).run(verbose=0)
    cas = mcscf.CASCI(mf, 4, 4)
    h1_mo, ecore = cas.get_h1eff()
    eri_mo = ao2mo.restore(1, cas.get_h2eff(), 4)
    e_cas = cas.run(verbose=0).e_tot
    return ecore, h1_mo, eri_mo, e_cas, mf.e_tot, geom


def _write(path: Path, terms: dict, n: int, provenance: str, chem_ref: float) -> float:
    h = PauliHamiltonian.from_terms(n, list(terms.items()), unit="Hartree")
    gs = exact_diagonalize(h)
    assert abs(gs.energy - chem_ref) < 1e-7, (gs.energy, chem_ref)
    doc = {
        "n_qubits": n,
        "unit": "Hartree",
        "reference_ground_energy": gs.energy,
        "provenance": provenance + f"; pyscf reference energy {chem_ref:.12f}",
        "terms": [{"pauli": p, "coeff": c} for p, c in sorted(terms.items())],
    }
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return gs.energy


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("src/qceat/data"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    enuc, h1_mo, eri_mo, fci, ehf = h2_sto3g()
    h1, g = spin_orbital_integrals(h1_mo, eri_mo)
    terms = jordan_wigner(enuc, h1, g)
    e = _write(
        args.out / "h2_sto3g.json", terms, 4,
        "H2 at 0.7414 Angstrom, STO-3G, RHF orbitals, interleaved-spin Jordan-Wigner "
        f"(pyscf); HF energy {ehf:.12f}", fci,
    )
    print(f"h2_sto3g: {len(terms)} terms, E0 = {e:.12f}, FCI = {fci:.12f}")

    ecore, h1_mo, eri_mo, ecas, ehf, geom = h2o_cas44()
    h1, g = spin_orbital_integrals(h1_mo, eri_mo)
    terms = jordan_wigner(ecore, h1, g)
    e = _write(
        args.out / "h2o_8q.json", terms, 8,
        f"H2O ({geom}), STO-3G, CASCI(4e,4o) active space over RHF orbitals, "
        f"interleaved-spin Jordan-Wigner (pyscf); HF energy {ehf:.12f}", ecas,
    )
    print(f"h2o_8q: {len(terms)} terms, E0 = {e:.12f}, CASCI = {ecas:.12f}")


if __name__ == "__main__":
    main()
