from itertools import combinations, permutations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from services.errors import SubsetError, TargetError
from services.target_model import (
    CoordinateSubset, ProductSpace, build_target, conditional, conditional_independence_gap, marginalize,
    random_markov_triple, random_target,
)
from tests.strategies import targets


def test_build_target_normalizes_weights():
    target = build_target([2, 2], [1, 2, 3, 4])
    assert np.isclose(target.probs.sum(), 1.0)
    assert np.allclose(target.probs, [0.1, 0.2, 0.3, 0.4])
    assert target.strictly_positive
    assert target.K == 2 and target.dim == 4


def test_probs_are_read_only():
    target = build_target([2, 2], [1, 1, 1, 1])
    with pytest.raises(ValueError):
        target.probs[0] = 0.5


def test_zero_weight_marks_target_not_strictly_positive():
    assert not build_target([2, 2], [1, 0, 0, 1]).strictly_positive


@pytest.mark.parametrize("sizes, weights, field_name", [
    ([2, 2], [1, 1, 1], "weights"),
    ([2, 2], [1, -1, 1, 1], "weights"),
    ([2, 2], [0, 0, 0, 0], "weights"),
    ([2, 2], [1, float("nan"), 1, 1], "weights"),
    ([1, 2], [1, 1], "sizes"),
    ([4], [1, 1, 1, 1], "sizes"),
])
def test_invalid_targets_name_the_field(sizes, weights, field_name):
    with pytest.raises(TargetError, match=field_name):
        build_target(sizes, weights)


def test_flat_index_is_row_major_with_first_coordinate_slowest():
    space = ProductSpace((2, 3))
    assert space.flat_index((1, 2)) == 5
    assert space.flat_index((0, 1)) == 1
    assert space.multi_index(4) == (1, 1)
    assert space.states()[3].tolist() == [1, 0]


def test_coordinate_subset_validation():
    subset = CoordinateSubset.of([3, 1], 4)
    assert subset.indices == (1, 3)
    assert subset.complement() == (2, 4)
    assert subset.axes == (0, 2)
    assert str(subset) == "{1,3}"
    with pytest.raises(SubsetError):
        CoordinateSubset.of([], 3)
    with pytest.raises(SubsetError):
        CoordinateSubset.of([1, 2, 3], 3)
    with pytest.raises(SubsetError):
        CoordinateSubset.of([1, 1], 3)
    with pytest.raises(SubsetError):
        CoordinateSubset.of([4], 3)


def test_marginalize_sums_out_complement(rho_pair):
    marginal = marginalize(rho_pair, [1])
    assert np.allclose(marginal.probs, [0.5, 0.5])
    assert marginal.parent_dim == 4


def test_marginal_as_joint_needs_two_coordinates(random_232):
    with pytest.raises(SubsetError):
        marginalize(random_232, [1]).as_joint()
    joint = marginalize(random_232, [1, 2]).as_joint()
    assert joint.space.shape == (2, 3)
    assert np.isclose(joint.probs.sum(), 1.0)


def test_conditional_of_correlated_pair(rho_pair):
    assert np.allclose(conditional(rho_pair, [1], [0]), [0.75, 0.25])
    assert np.allclose(conditional(rho_pair, [2], [1]), [0.25, 0.75])


def test_conditional_on_zero_mass_slice_is_an_error():
    target = build_target([2, 2], [1, 1, 0, 0])
    with pytest.raises(TargetError, match="zero mass"):
        conditional(target, [2], [1])


def test_conditional_label_out_of_range(rho_pair):
    with pytest.raises(TargetError):
        conditional(rho_pair, [1], [2])


def test_conditional_independence_gap(triple, random_222, product_target):
    assert conditional_independence_gap(triple, [1], [2], [3]) < 1e-12
    assert conditional_independence_gap(random_222, [1], [2], [3]) > 1e-6
    assert conditional_independence_gap(product_target, [1], [2, 3]) < 1e-12


def test_conditional_independence_gap_rejects_non_partitions(triple):
    with pytest.raises(SubsetError):
        conditional_independence_gap(triple, [1], [1], [3])
    with pytest.raises(SubsetError):
        conditional_independence_gap(triple, [], [2], [1, 3])


def test_random_target_is_reproducible():
    first = random_target([2, 3, 2], seed=5)
    second = random_target([2, 3, 2], seed=5)
    assert np.array_equal(first.probs, second.probs)
    assert first.strictly_positive


def test_random_markov_triple_is_conditionally_independent():
    target = random_markov_triple([3, 2, 3], seed=9)
    assert conditional_independence_gap(target, [1], [2], [3]) < 1e-12


@settings(max_examples=40, deadline=None)
@given(targets(min_k=3, max_k=4), st.data())
def test_marginalizing_in_stages_matches_direct_marginal(target, data):
    K = target.K
    outer = data.draw(st.sampled_from([s for r in range(2, K) for s in combinations(range(1, K + 1), r)]))
    inner = data.draw(st.sampled_from([s for r in range(1, len(outer)) for s in combinations(outer, r)]))
    staged = marginalize(target, outer)
    nested = marginalize(staged.as_joint(), staged.local_subset(inner))
    assert np.allclose(nested.probs, marginalize(target, inner).probs, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(targets(min_k=2, max_k=3), st.data())
def test_conditional_times_marginal_rebuilds_each_slice(target, data):
    K = target.K
    subset = data.draw(st.sampled_from([s for r in range(1, K) for s in combinations(range(1, K + 1), r)]))
    rest = [i for i in range(1, K + 1) if i not in subset]
    rest_sizes = [target.space.shape[i - 1] for i in rest]
    rest_marginal = marginalize(target, rest).probs
    for labels in product(*(range(n) for n in rest_sizes)):
        index = [slice(None)] * K
        for coord, label in zip(rest, labels):
            index[coord - 1] = label
        mass = rest_marginal[np.ravel_multi_index(labels, rest_sizes)]
        rebuilt = mass * conditional(target, subset, labels)
        assert np.allclose(rebuilt, target.tensor[tuple(index)].ravel(), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(targets(min_k=3, max_k=3), st.sampled_from(list(permutations((1, 2, 3)))))
def test_conditional_independence_gap_is_symmetric(target, roles):
    u, v, w = roles
    assert conditional_independence_gap(target, [u], [v], [w]) == pytest.approx(
        conditional_independence_gap(target, [v], [u], [w]), abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(targets(min_k=2, max_k=2))
def test_unconditional_gap_is_symmetric(target):
    assert conditional_independence_gap(target, [1], [2]) == pytest.approx(
        conditional_independence_gap(target, [2], [1]), abs=1e-14)
