import numpy as np
import pytest

from entorder import catalog
from entorder.statecore import (LocalOperator, PureState, StateError, apply_locals, ghz,
                                overlap, tensor_product)
from entorder.structure import (Partition, factorize, family_member_d_minus_1, ghz_witness,
                                graph_partition, independence_graph, is_completely_independent,
                                is_independent, join_factors, partition, partition_geq,
                                restrict, to_dot)

from conftest import random_state


def test_fig1_graph_and_partition():
    s = catalog.fig1_state()
    g = independence_graph(s)
    assert g.edges == [(1, 2), (2, 3)]
    indep = {(i, j) for i in range(1, 5) for j in range(i + 1, 5) if is_independent(s, i, j)}
    assert indep == {(1, 3), (1, 4), (2, 4), (3, 4)}
    assert partition(s).blocks == ((1, 2, 3), (4,))


def test_complete_independence_differs_from_independence():
    s = catalog.fig1_state()
    assert is_independent(s, 1, 3) and not is_completely_independent(s, 1, 3)
    assert is_completely_independent(s, 1, 4)
    with pytest.raises(StateError):
        is_independent(s, 2, 2)


def test_graphs_of_standard_states():
    assert independence_graph(ghz(2, 3)).edges == [(1, 2), (1, 3), (2, 3)]
    assert independence_graph(catalog.get("prod3")).edges == []
    assert partition(catalog.get("Bell_0")).blocks == ((1, 2), (3,))


def test_partition_order():
    top = Partition.of([[1, 2, 3]])
    mid = Partition.of([[1, 2], [3]])
    low = Partition.of([[1], [2], [3]])
    other = Partition.of([[1], [2, 3]])
    assert partition_geq(top, mid) and partition_geq(mid, low) and partition_geq(top, low)
    assert not partition_geq(mid, top)
    assert not partition_geq(mid, other) and not partition_geq(other, mid)
    with pytest.raises(ValueError):
        Partition.of([[1], [1, 2]])


def test_factorize_round_trip(rng):
    a = random_state(rng, (2, 3))
    b = random_state(rng, (2,))
    s = tensor_product(a, b)
    from entorder.statecore import permute_parties

    s = permute_parties(s, [1, 3, 2])
    part = partition(s)
    assert part.blocks == ((1, 3), (2,))
    rebuilt = join_factors(factorize(s, part), part)
    assert overlap(rebuilt, s) == pytest.approx(1.0)


def test_fig1_fourth_factor():
    f = restrict(catalog.fig1_state(), [4])
    assert overlap(f, PureState((2,), [1, 1])) == pytest.approx(1.0)


def test_restrict_rejects_entangled_block():
    with pytest.raises(StateError, match="inconsistency"):
        restrict(ghz(2, 3), [1])


def test_ghz_witness_theta():
    w = ghz_witness(catalog.theta_state())
    assert w is not None
    assert np.allclose(np.abs(w.ops[0].matrix), np.diag([0.8, 0.6]))
    assert w.residual(ghz(2, 2), catalog.theta_state()) < 1e-8


def test_ghz_witness_absent_for_w_and_psi():
    assert ghz_witness(catalog.w_state()) is None
    assert ghz_witness(catalog.psi(4)) is None


def test_ghz_witness_after_random_filter(rng):
    ops = [LocalOperator(i + 1, rng.standard_normal((3, 3))) for i in range(3)]
    s = apply_locals(ghz(3, 3), ops)
    w = ghz_witness(s)
    assert w is not None and all(w.invertible)
    assert w.residual(ghz(3, 3), s) < 1e-8


def test_partition_invariant_under_invertible_ops(rng):
    s = catalog.fig1_state()
    ops = [LocalOperator(i + 1, rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
           for i, d in enumerate(s.dims)]
    assert partition(apply_locals(s, ops)) == partition(s)


def test_family_member():
    s = family_member_d_minus_1(3, 1, 3)
    assert s.tensor[0, 0, 0] == 1 and s.tensor[1, 1, 1] == 1 and s.tensor[0, 2, 2] == 1
    assert np.count_nonzero(s.amps) == 3
    with pytest.raises(ValueError):
        family_member_d_minus_1(3, 3, 3)


def test_dot_export():
    s = catalog.fig1_state()
    g = independence_graph(s)
    dot = to_dot(g, graph_partition(g))
    assert "A1 -- A2;" in dot and "A2 -- A3;" in dot and "A1 -- A3" not in dot
    assert "cluster_1" in dot and "A4;" in dot
