import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import equal_up_to_phase, genes, genomes, reference_unitary, zero_state
from qceat.genome import (
    Gene,
    Genome,
    GenomeError,
    build_hea,
    from_sequence,
    load_genome,
    pack,
    parameters,
    random_gene,
    random_genome,
    save_genome,
    set_parameters,
    simplify,
)


def rx(q, t):
    return Gene("RX", (q,), t)


def rz(q, t):
    return Gene("RZ", (q,), t)


def cx(c, t):
    return Gene("CX", (c, t))


def layered(n, *layers):
    return Genome(n, tuple(tuple(layer) for layer in layers))


@pytest.mark.parametrize("bad", [
    lambda: Gene("RY2", (0,), 0.1),
    lambda: Gene("CX", (1, 1)),
    lambda: Gene("CX", (0, 1), 0.3),
    lambda: Gene("RX", (0, 1), 0.3),
    lambda: Gene("RX", (0,), None),
    lambda: Gene("RZ", (0,), math.inf),
    lambda: layered(2, [rx(0, 1.0), cx(0, 1)]),
    lambda: layered(2, [rx(2, 1.0)]),
    lambda: Genome(2, ((),)),
])
def test_invalid_genes_and_layers_raise(bad):
    with pytest.raises(GenomeError):
        bad()


def test_layers_are_stored_in_canonical_order():
    g = layered(3, [rz(2, 0.1), cx(0, 1)])
    assert [x.qubits for x in g.layers[0]] == [(0, 1), (2,)]


@pytest.mark.parametrize("n, L, n_rot, n_cx", [(4, 2, 24, 6), (4, 3, 32, 9), (8, 2, 48, 14)])
def test_hea_gate_counts(n, L, n_rot, n_cx):
    g = build_hea(n, L)
    assert (g.n_rotations, g.n_cx) == (n_rot, n_cx)
    assert len(parameters(g)) == n_rot
    assert {x.gate for x in g.genes} == {"RY", "RZ", "CX"}


def test_hea_layout():
    # explicit gate order: (RY, RZ) column, CX chain, (RY, RZ) column
    th = iter(np.random.default_rng(0).uniform(0, 2 * math.pi, 12))
    seq = []
    for block in ("col", "chain", "col"):
        if block == "col":
            for q in range(3):
                seq += [Gene("RY", (q,), next(th)), Gene("RZ", (q,), next(th))]
        else:
            seq += [cx(0, 1), cx(1, 2)]
    ref = pack(3, seq)
    g = build_hea(3, 1, parameters(ref))
    assert g == ref
    np.testing.assert_allclose(reference_unitary(g), reference_unitary(SimpleNamespace(n_qubits=3, genes=seq)),
                               atol=1e-12)


@pytest.mark.parametrize("n, L", [(1, 1), (4, 0)])
def test_hea_preconditions(n, L):
    with pytest.raises(ValueError):
        build_hea(n, L)


def test_simplify_absorbs_adjacent_rotations():
    g = simplify(layered(1, [rx(0, 0.3)], [rx(0, 0.5)]))
    assert g.n_genes == 1 and g.genes[0].theta == pytest.approx(0.8, abs=1e-15)


def test_simplify_cancels_cx_pairs():
    assert simplify(layered(2, [cx(0, 1)], [cx(0, 1)])).n_genes == 0


def test_simplify_keeps_different_kinds_and_reversed_cx():
    g = layered(2, [rx(0, 0.1)], [rz(0, 0.2)])
    assert simplify(g) == g
    h = layered(2, [cx(0, 1)], [cx(1, 0)])
    assert simplify(h) == h


def test_simplify_only_merges_literally_adjacent_layers():
    g = layered(2, [rx(0, 0.3)], [rz(1, 0.1)], [rx(0, 0.5)])
    assert simplify(g) == g


def test_simplify_cascades():
    # cancelling the inner CX pair makes the two RX adjacent
    g = layered(2, [rx(0, 0.3)], [cx(0, 1)], [cx(0, 1)], [rx(0, 0.5)])
    s = simplify(g)
    assert s.structure == (("RX", (0,)),)
    assert s.genes[0].theta == pytest.approx(0.8)


@given(genomes())
def test_simplify_is_idempotent(g):
    s = simplify(g)
    assert simplify(s) == s


@settings(max_examples=200)
@given(genomes(max_genes=12))
def test_simplify_preserves_the_state(g):
    psi = reference_unitary(g) @ zero_state(g.n_qubits)
    phi = reference_unitary(simplify(g)) @ zero_state(g.n_qubits)
    assert equal_up_to_phase(phi, psi, 1e-10)


@settings(max_examples=200)
@given(genomes(max_genes=12))
def test_simplify_preserves_the_unitary(g):
    u = reference_unitary(g)
    v = reference_unitary(simplify(g))
    assert equal_up_to_phase(v.ravel(), u.ravel(), 1e-10)


@given(genomes())
def test_layer_invariant_after_operations(g):
    for h in (g, simplify(g), from_sequence(g.n_qubits, g.genes[::-1])):
        h.check_invariants()


def test_random_genome_is_deterministic():
    a = random_genome(4, 4, np.random.default_rng(5))
    b = random_genome(4, 4, np.random.default_rng(5))
    assert a == b


def test_single_gene_genome():
    g = random_genome(2, 1, np.random.default_rng(0))
    assert g.n_genes == 1 and g.depth == 1


def test_random_genome_rejects_empty():
    with pytest.raises(ValueError):
        random_genome(4, 0, np.random.default_rng(0))


def test_random_gate_kinds_are_uniform():
    # one gene per genome so simplification cannot bias the count
    rng = np.random.default_rng(2024)
    counts = {"RX": 0, "RZ": 0, "CX": 0}
    n = 10_000
    for _ in range(n):
        counts[random_genome(4, 1, rng).genes[0].gate] += 1
    for c in counts.values():
        assert abs(c / n - 1 / 3) < 0.02


def test_random_thetas_in_range():
    rng = np.random.default_rng(1)
    th = [x.theta for x in (random_gene(4, rng) for _ in range(2000)) if x.is_rotation]
    assert min(th) >= 0 and max(th) < 2 * math.pi


@given(st.lists(genes(4), max_size=12))
def test_pack_is_greedy(seq):
    g = pack(4, seq)
    assert sorted(map(str, g.genes)) == sorted(map(str, seq))
    # every gene after the first layer touches a qubit used in the previous layer
    for k in range(1, g.depth):
        prev = {q for x in g.layers[k - 1] for q in x.qubits}
        assert all(set(x.qubits) & prev for x in g.layers[k])


def test_parameter_vector_order_and_round_trip():
    g = layered(3, [rz(2, 0.3), rx(0, 0.1)], [cx(0, 1)], [rx(1, 0.2)])
    np.testing.assert_array_equal(parameters(g), [0.1, 0.3, 0.2])
    assert set_parameters(g, parameters(g)) == g
    assert parameters(layered(2, [cx(0, 1)])).shape == (0,)
    with pytest.raises(ValueError):
        set_parameters(g, [1.0, 2.0])


@given(genomes(), st.integers(0, 2**32 - 1))
def test_set_parameters_round_trip(g, seed):
    th = np.random.default_rng(seed).normal(size=g.n_rotations) * 10
    h = set_parameters(g, th)
    np.testing.assert_array_equal(parameters(h), th)
    assert h.structure == g.structure


@given(genomes(kinds=("RX", "RY", "RZ", "CX")))
def test_json_round_trip_is_bit_exact(g):
    h = Genome.from_json(g.to_json())
    assert h == g
    assert parameters(h).tobytes() == parameters(g).tobytes()


def test_file_round_trip(tmp_path):
    g = build_hea(4, 2, np.random.default_rng(0).uniform(0, 6, 24))
    save_genome(g, tmp_path / "g.json", note="x")
    assert load_genome(tmp_path / "g.json") == g


def test_malformed_genome_document():
    with pytest.raises(GenomeError):
        Genome.from_dict({"layers": []})


def test_structure_ignores_angles():
    a = pack(2, [rx(0, 0.1), cx(0, 1)])
    b = pack(2, [rx(0, 2.0), cx(0, 1)])
    assert a.structure == b.structure and a != b
