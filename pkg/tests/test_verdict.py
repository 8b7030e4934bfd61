import numpy as np
import pytest

from entorder import catalog
from entorder.protocols import ProtocolTrace
from entorder.statecore import PureState, StateError, ghz
from entorder.verdict import (NO, UNKNOWN, YES, HierarchyInconsistency, Regime,
                              RsepCertificate, compare, hierarchy_check, lu_search,
                              mcsllocc_equals_mclocc, parse_regime)


def test_parse_regime_alias():
    assert parse_regime("mcslocc")[0] is Regime.MCLOCC
    assert parse_regime("locc") == (Regime.LOCC, None)
    with pytest.raises(ValueError):
        parse_regime("qlocc")


def test_party_count_mismatch():
    with pytest.raises(StateError):
        compare(ghz(2, 3), ghz(2, 2), "SLOCC")


def test_ghz_w_pair():
    g, w = catalog.get("GHZ2x3"), catalog.w_state()
    assert compare(g, w, "MCLOCC").answer == YES
    assert compare(w, g, "MCLOCC").answer == YES
    v = compare(g, w, "SLOCC")
    assert v.answer == NO and v.details["message"] == "tensor rank 2 < 3"
    assert compare(g, w, "LOCC").answer == NO


def test_incomparable_rank4_vs_ghz3():
    a, b = catalog.incomparable_rank4(), ghz(3, 3)
    assert compare(a, b, "SLOCC").answer == NO
    assert compare(b, a, "SLOCC").answer == NO


def test_grouped_ghz_copies_reach_w():
    v = compare(catalog.ghz_squared(), catalog.w_state(), "SLOCC")
    assert v.answer == YES and v.reason == "WitnessFound"
    assert v.witness.residual(catalog.ghz_squared(), catalog.w_state()) < 1e-8


def test_theta_bell():
    src, dst = catalog.theta_state(), catalog.bell()
    v = compare(src, dst, "LOCC")
    assert v.answer == NO and v.reason == "MajorizationFail"
    v = compare(src, dst, "SLOCC")
    assert v.answer == YES and v.witness.residual(src, dst) < 1e-8
    assert compare(dst, src, "LOCC").answer == YES


def test_psi2_psi5_stays_unknown():
    v = compare(catalog.psi(2), catalog.psi(5), "SLOCC")
    assert v.answer == UNKNOWN and v.checks


def test_tgp10_counterexample():
    v = compare(ghz(2, 3), catalog.tgp10_state(), "LOCC")
    assert v.answer == NO and v.reason == "Counterexample"
    assert compare(ghz(2, 3), catalog.tgp10_state(), "SLOCC").answer == YES


def test_reflexive_all_regimes():
    for name in ("W", "fig1", "Psi3", "Bell"):
        s = catalog.get(name)
        out = hierarchy_check(s, s)
        assert {v.answer for v in out.values()} == {YES}


def test_incomparable_partitions():
    a, b = catalog.get("Bell_0"), catalog.get("0_Bell")
    assert compare(a, b, "MCLOCC").answer == NO
    assert compare(a, b, "SLOCC").answer == NO
    assert mcsllocc_equals_mclocc(a, b)["plan"] is None


def test_lu_search_finds_unitaries(rng):
    from entorder.statecore import LocalOperator, apply_locals

    s = catalog.w_state()
    us = [np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
          for _ in range(3)]
    t = apply_locals(s, [LocalOperator(i + 1, u) for i, u in enumerate(us)])
    w = lu_search(s, t)
    assert w is not None and w.residual(s, t) < 1e-8
    v = compare(s, t, "LOCC")
    assert v.answer == YES and v.reason == "LUEquivalence"


def test_lu_search_rejects_different_spectra():
    assert lu_search(catalog.w_state(), ghz(2, 3)) is None


def test_blockwise_locc():
    src = PureState((2, 2, 2), np.kron(catalog.bell().amps, [1, 0]))
    dst = PureState((2, 2, 2), np.kron(catalog.theta_state().amps, [0, 1]))
    v = compare(src, dst, "LOCC")
    assert v.answer == YES and v.reason == "MajorizationPass"


def test_reduced_separable_route():
    h = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
    cert = RsepCertificate([0.36, 0.64], [[np.eye(2)[0], np.eye(2)[1]], list(h)])
    from entorder.protocols import reduced_separable_target

    dst = reduced_separable_target(cert.p, cert.a)
    v = compare(ghz(2, 3), dst, "LOCC", certificate=cert)
    assert v.answer == YES and v.reason == "ReducedSeparableProtocol"
    assert isinstance(v.witness, ProtocolTrace) and v.witness.succeeded()
    assert compare(ghz(2, 3), dst, "LOCC").answer == UNKNOWN


def test_reduced_separable_certificate_too_large():
    a = [[np.eye(3)[k] for k in range(3)], [np.eye(3)[k] for k in range(3)]]
    cert = RsepCertificate([1 / 3] * 3, a)
    from entorder.protocols import reduced_separable_target

    dst = reduced_separable_target(cert.p, a)
    v = compare(PureState((3, 3, 3), embed_ghz2()), dst, "LOCC", certificate=cert)
    assert v.answer != YES


def embed_ghz2():
    t = np.zeros((3, 3, 3))
    t[0, 0, 0] = t[1, 1, 1] = 1
    return t.reshape(-1)


def test_verdict_serialization():
    v = compare(catalog.theta_state(), catalog.bell(), "SLOCC")
    d = v.as_dict()
    assert set(d) >= {"regime", "answer", "reason", "details", "witness_ref"}
    assert d["witness_ref"]["kind"] == "slocc-witness"


def test_hierarchy_check_raises_on_contradiction(monkeypatch):
    import entorder.verdict as V

    real = V.compare

    def fake(src, dst, regime, *a, **k):
        v = real(src, dst, regime, *a, **k)
        if regime is Regime.MCLOCC:
            v.answer = NO
        return v

    monkeypatch.setattr(V, "compare", fake)
    with pytest.raises(HierarchyInconsistency):
        V.hierarchy_check(catalog.w_state(), catalog.w_state())


@pytest.mark.parametrize("src,dst,route", [("W", "GHZ2x3", "bell-merge-teleport"),
                                           ("GHZ3", "GHZ2x3", "filter"),
                                           ("GHZ2x3", "W", "bell-merge-teleport"),
                                           ("GHZ2x3", "GHZ3", "bell-merge-teleport"),
                                           ("W", "rank4inc", "bell-merge-teleport")])
def test_demonstration_plans(src, dst, route):
    rep = mcsllocc_equals_mclocc(catalog.get(src), catalog.get(dst), seed=3)
    tr = rep["trace"]
    assert rep["verdict"].answer == YES and tr.extras["route"] == route
    assert tr.final_overlap >= 1 - 1e-8


def test_w_to_ghz_plan_uses_two_bell_pairs():
    rep = mcsllocc_equals_mclocc(catalog.w_state(), ghz(2, 3))
    lines = rep["plan"].describe()
    assert lines[0].startswith("extract Bell pair on edge (A1,A2)")
    assert lines[1].startswith("extract Bell pair on edge (A1,A3)")
    assert rep["trace"].extras["source_copies"] == 2


def test_yes_witnesses_and_no_obstructions_recheck():
    from itertools import product

    from entorder.invariants import local_ranks, tensor_rank
    from entorder.structure import SloccWitness, partition, partition_geq

    names = ["W", "GHZ2x3", "GHZ2sq", "Psi1", "Psi4", "tgp10", "rank4inc", "prod3",
             "Bell_0", "GHZ3"]
    for a, b in product(names, repeat=2):
        src, dst = catalog.get(a), catalog.get(b)
        v = compare(src, dst, "SLOCC")
        if v.answer == YES:
            assert isinstance(v.witness, SloccWitness) and v.witness.verifies(src, dst)
        elif v.answer == NO:
            d = v.details
            if v.reason == "PartitionOrder":
                assert not partition_geq(partition(src), partition(dst))
            elif d["invariant"] == "local rank":
                p = d["party"]
                assert local_ranks(dst)[p - 1] > local_ranks(src)[p - 1]
            else:
                assert tensor_rank(dst).lower > tensor_rank(src).upper
