import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crnsearch.cases import make_case_study
from crnsearch.encoding import decode
from crnsearch.network import ConservationMatrix, ReactionNetwork
from crnsearch.validity import (
    Reason,
    assess,
    conservation_valid,
    left_nullspace,
    nullspace_reason,
    nullspace_valid,
    prepare_conservation,
)

from conftest import rxn

# x1 -> x2 + x3 ; x2 -> x1 + x3: x3 is only ever produced
ZERO_ROW_NET = ReactionNetwork(3, (rxn([1], [2, 3]), rxn([2], [1, 3])))


def test_conservation_case3_truth():
    case = make_case_study(3)
    assert conservation_valid(case.truth_network.stoichiometric_matrix(), case.conservation)


def test_conservation_empty_network():
    assert conservation_valid(np.zeros((3, 0), dtype=int), [[1, 2, 3]])


def test_conservation_hand_example():
    N = ReactionNetwork(2, (rxn([1], [2]),)).stoichiometric_matrix()
    assert not conservation_valid(N, ConservationMatrix([[1, 2]]))
    assert conservation_valid(N, [[2, 2]])


def test_conservation_rational_and_irrational_entries():
    N = ReactionNetwork(3, (rxn([1, 2], [3]),)).stoichiometric_matrix()
    assert conservation_valid(N, [[0.5, 0.25, 0.75]])
    assert not conservation_valid(N, [[0.5, 0.25, 0.7]])
    r = np.sqrt(2)
    assert conservation_valid(N, [[r, r, 2 * r]])


def test_conservation_dimension_mismatch():
    with pytest.raises(ValueError):
        conservation_valid(np.zeros((3, 1), dtype=int), [[1, 2]])


def test_nullspace_zero_row_example():
    N = ZERO_ROW_NET.stoichiometric_matrix()
    basis = left_nullspace(N)
    assert basis.shape == (3, 1)
    v = basis[:, 0] * np.sign(basis[0, 0])
    np.testing.assert_allclose(v, [0.7071067811865476, 0.7071067811865476, 0.0], atol=1e-6)
    assert nullspace_reason(N) is Reason.ZERO_ROW_IN_NULLSPACE
    assert not nullspace_valid(N)


def test_nullspace_case1_truth_valid():
    N = make_case_study(1).truth_network.stoichiometric_matrix()
    assert nullspace_valid(N)


def test_nullspace_single_reaction():
    N = ReactionNetwork(3, (rxn([1, 2], [3]),)).stoichiometric_matrix()
    assert left_nullspace(N).shape == (3, 2)
    assert nullspace_valid(N)


def test_no_nullspace():
    # x1 -> x2 -> 2 x1 has full row rank, so nothing is conserved
    net = ReactionNetwork(2, (rxn([1], [2]), rxn([2], [1, 1])))
    assert nullspace_reason(net.stoichiometric_matrix()) is Reason.NO_NULLSPACE


def test_assess_modes():
    case = make_case_study(3)
    wrong = case.decoys["x5_reactant"]
    v = assess(wrong, case.conservation, 10)
    assert v.valid and v.alpha == 0 and v.reason is Reason.VALID
    v = assess(ReactionNetwork(3), None, 10)
    assert v.valid and v.alpha == 0
    v = assess(ZERO_ROW_NET, None, 10)
    assert not v.valid and v.alpha == 10
    bad = ReactionNetwork(10, (rxn([1], [2]),))
    v = assess(bad, case.conservation, 7)
    assert v.reason is Reason.CONSERVATION_VIOLATED and v.alpha == 7


def test_prepared_conservation_matches_plain():
    case = make_case_study(3)
    prepared = prepare_conservation(case.conservation)
    rng = np.random.default_rng(0)
    for _ in range(200):
        ints = rng.integers(0, 11, size=25)
        net = decode(ints, 10, 5).network
        N = net.stoichiometric_matrix()
        assert conservation_valid(N, prepared) == conservation_valid(N, case.conservation.values)


def test_a_takes_precedence_over_nullspace():
    # valid under A although the nullspace rule would reject it
    A = ConservationMatrix([[1, 1, 2]])
    assert not conservation_valid(ZERO_ROW_NET.stoichiometric_matrix(), A)
    net = ReactionNetwork(3, (rxn([1, 2], [3]),))
    assert assess(net, A, 10).valid


def test_zero_row_rule_is_basis_independent():
    N = ZERO_ROW_NET.stoichiometric_matrix()
    assert nullspace_reason(N[:, ::-1]) is nullspace_reason(N)


slot = st.tuples(*[st.integers(0, 5)] * 5)


@settings(max_examples=200, deadline=None)
@given(st.lists(slot, min_size=1, max_size=7), st.randoms())
def test_nullspace_properties(slots, rnd):
    net = decode(np.array([v for s in slots for v in s]), 5, len(slots)).network
    N = net.stoichiometric_matrix()
    basis = left_nullspace(N)
    rank = np.linalg.matrix_rank(N.astype(float)) if N.shape[1] else 0
    assert basis.shape[1] + rank == 5
    np.testing.assert_allclose(N.T @ basis, 0.0, atol=1e-9)
    base = nullspace_valid(N)
    cols = list(range(N.shape[1]))
    rnd.shuffle(cols)
    signs = np.array([rnd.choice([-1, 1]) * rnd.choice([1, 2, 3]) for _ in cols])
    assert nullspace_valid(N[:, cols] * signs) == base


def test_conservation_implies_nullspace_exists():
    case = make_case_study(3)
    rng = np.random.default_rng(5)
    for _ in range(300):
        net = decode(rng.integers(0, 11, size=30), 10, 6).network
        N = net.stoichiometric_matrix()
        if conservation_valid(N, case.conservation):
            assert left_nullspace(N).shape[1] >= 1
            assert nullspace_valid(N)
