import json

import numpy as np
import pytest

from entorder.statecore import (LocalOperator, MeasurementRound, PureState, StateError,
                                apply_local, apply_measurement, basis_state,
                                branch_probabilities, drop_trivial_parties, embed,
                                equal_up_to_phase_scale, from_terms, from_vectors, ghz,
                                load_state, merge_parties, overlap, permute_parties,
                                reduced_density, save_state, state_from_dict, state_to_dict,
                                tensor_product)


def test_pure_state_rejects_bad_input():
    with pytest.raises(StateError):
        PureState((2, 2), np.zeros(4))
    with pytest.raises(StateError):
        PureState((2, 2), np.ones(3))
    with pytest.raises(StateError):
        PureState((0,), np.ones(0))


def test_state_stays_unnormalized():
    s = ghz(2, 3)
    assert s.norm2() == pytest.approx(2.0)
    assert s.normalized().norm2() == pytest.approx(1.0)


def test_party_one_is_slowest_index():
    s = basis_state((2, 3), (1, 2))
    assert np.flatnonzero(s.amps).tolist() == [5]


def test_tensor_product_and_grouping():
    g = ghz(2, 2)
    prod = tensor_product(g, g)
    assert prod.dims == (2, 2, 2, 2)
    grouped = tensor_product(g, g, {1: 1, 2: 2})
    assert grouped.dims == (4, 4)
    # grouped GHZ_2 x GHZ_2 is GHZ_4 with index ia * 2 + ib
    assert overlap(grouped, ghz(4, 2)) == pytest.approx(1.0)


def test_permute_parties():
    s = from_terms((2, 3), [(1, 2)])
    t = permute_parties(s, [2, 1])
    assert t.dims == (3, 2)
    assert t.tensor[2, 1] == 1


def test_reduced_density_of_ghz():
    rho = reduced_density(ghz(2, 3).normalized(), [1])
    assert np.allclose(rho.matrix, np.eye(2) / 2)
    rho12 = reduced_density(ghz(2, 3).normalized(), [1, 2])
    assert np.allclose(np.diag(rho12.matrix).real, [0.5, 0, 0, 0.5])


def test_reduced_density_rejects_bad_subset():
    with pytest.raises(StateError):
        reduced_density(ghz(2, 3), [1, 1])
    with pytest.raises(StateError):
        reduced_density(ghz(2, 3), [4])


def test_apply_local_dimension_and_annihilation():
    s = ghz(2, 2)
    with pytest.raises(StateError):
        apply_local(s, LocalOperator(1, np.eye(3)))
    with pytest.raises(StateError, match="annihilated"):
        apply_local(from_terms((2, 2), [(0, 0)]), LocalOperator(1, np.diag([0, 1])))
    out = apply_local(s, LocalOperator(2, np.ones((1, 2))))
    assert out.dims == (2, 1)


def test_measurement_round_checks_completeness():
    with pytest.raises(StateError, match="not complete"):
        MeasurementRound(1, {0: np.diag([1, 0])})
    with pytest.raises(StateError):
        MeasurementRound(1, {0: np.eye(2)}, {0: [LocalOperator(1, np.eye(2))]})
    with pytest.raises(StateError):
        MeasurementRound(1, {0: np.eye(2)}, {0: [LocalOperator(2, np.diag([1, 2]))]})


def test_measurement_branches_on_ghz():
    rnd = MeasurementRound(1, {0: np.diag([1, 0]), 1: np.diag([0, 1])},
                           {1: [LocalOperator(2, np.array([[0, 1], [1, 0]]))]})
    probs = branch_probabilities(ghz(2, 2), rnd)
    assert probs == pytest.approx({0: 0.5, 1: 0.5})
    label, p, post = apply_measurement(ghz(2, 2), rnd, branch=1)
    assert p == pytest.approx(0.5)
    assert overlap(post, basis_state((2, 2), (1, 0))) == pytest.approx(1.0)


def test_sampled_measurement_is_seeded():
    rnd = MeasurementRound(1, {0: np.diag([1, 0]), 1: np.diag([0, 1])})
    a = [apply_measurement(ghz(2, 2), rnd, seed=s)[0] for s in range(20)]
    b = [apply_measurement(ghz(2, 2), rnd, seed=s)[0] for s in range(20)]
    assert a == b and set(a) == {0, 1}


def test_impossible_branch():
    rnd = MeasurementRound(1, {0: np.diag([1, 0]), 1: np.diag([0, 1])})
    with pytest.raises(StateError, match="impossible"):
        apply_measurement(basis_state((2, 2), (0, 0)), rnd, branch=1)


def test_merge_and_drop():
    s = from_terms((2, 3, 2), [(1, 2, 1)])
    m = merge_parties(s, 1, 3)
    assert m.dims == (4, 3)
    assert m.tensor[3, 2] == 1
    d = drop_trivial_parties(PureState((2, 1, 3), np.ones(6)))
    assert d.dims == (2, 3)


def test_phase_scale_equality():
    s = ghz(3, 3)
    ok, f = equal_up_to_phase_scale(s, PureState(s.dims, -2j * s.amps))
    assert ok and f == pytest.approx(1.0)
    ok, _ = equal_up_to_phase_scale(s, from_terms((3, 3, 3), [(0, 0, 0)]))
    assert not ok


def test_embed_pads_with_zeros():
    e = embed(ghz(2, 2), (3, 2))
    assert e.dims == (3, 2) and e.tensor[2].sum() == 0


def test_from_vectors_is_product():
    s = from_vectors([np.array([1, 1]), np.array([0, 1, 0])])
    assert s.tensor[1, 1] == 1 and np.count_nonzero(s.amps) == 2


def test_state_file_round_trip(tmp_path):
    s = PureState((2, 3), np.arange(6) + 1j)
    path = tmp_path / "s.json"
    save_state(s, path)
    t = load_state(path)
    assert t.dims == s.dims and np.allclose(t.amps, s.amps)


def test_state_file_diagnostics(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"dims": [2],\n "amps": [}')
    with pytest.raises(StateError, match="line 2"):
        load_state(bad)
    with pytest.raises(StateError, match="duplicate"):
        state_from_dict({"dims": [2], "amps": [{"idx": [0], "re": 1}, {"idx": [0], "re": 1}]})
    with pytest.raises(StateError, match="out of range"):
        state_from_dict({"dims": [2], "amps": [{"idx": [2], "re": 1}]})
    with pytest.raises(StateError, match="missing field"):
        state_from_dict({"dims": [2]})
    assert json.dumps(state_to_dict(ghz(2, 2)))
