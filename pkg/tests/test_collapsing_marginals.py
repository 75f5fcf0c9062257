import numpy as np
import pytest

from services.collapsing_marginals import (
    blocked_vs_collapsed_check, build_embedding, collapsed_inheritance_check, collapsed_spectral_check,
    collapsed_step, marginal_chain, similarity_check, two_component_spectral_check,
)
from services.errors import PreconditionError, SubsetError
from services.operator_algebra import WeightVector
from services.target_model import correlated_pair, independent_product, marginalize, random_target


def test_embedding_is_an_isometry(random_232):
    embedding = build_embedding(random_232, [1, 2])
    assert embedding.matrix.shape == (12, 6)
    assert embedding.isometry_defect(random_232) < 1e-15
    f_I = np.arange(6.0)
    assert np.array_equal(embedding.restrict(embedding.lift(f_I)), f_I)
    assert np.array_equal(embedding.restriction_matrix @ embedding.lift(f_I), f_I)


def test_collapsed_step_refuses_whole_subset(random_232):
    marginal = marginalize(random_232, [1, 2])
    with pytest.raises(SubsetError):
        collapsed_step(marginal, [1, 2])
    with pytest.raises(SubsetError):
        collapsed_step(marginal, [3])
    step = collapsed_step(marginal, [2])
    assert step.matrix.shape == (6, 6)


@pytest.mark.parametrize("J", [(1,), (2,), (1, 2)])
def test_similarity_relation(random_232, J):
    result = similarity_check(random_232, [1, 2], J)
    assert result.holds
    assert result.intertwining_defect < 1e-10 and result.restriction_defect < 1e-10


@pytest.mark.parametrize("mode", ["cycle", "mixture"])
@pytest.mark.parametrize("seed", range(4))
def test_collapsed_and_joint_share_nonzero_spectra(mode, seed):
    target = random_target([2, 3, 2, 2], seed=seed)
    pair = collapsed_spectral_check(target, [1, 2, 3], [(1,), (2,), (3,)], mode)
    assert pair.passed
    assert pair.match.max_deviation <= 1e-8


def test_collapsed_mixture_with_explicit_weights(random_232):
    pair = collapsed_spectral_check(random_232, [1, 2], [(1,), (2,)], "mixture", WeightVector((0.2, 0.8)))
    assert pair.passed


def test_collapsed_family_must_cover_subset(random_232):
    with pytest.raises(PreconditionError):
        collapsed_spectral_check(random_232, [1, 2], [(1,)], "cycle")
    with pytest.raises(PreconditionError):
        collapsed_spectral_check(random_232, [1, 2], [(1,), (2,)], "sideways")


def test_blocked_matches_collapsed_under_conditional_independence(triple):
    report = blocked_vs_collapsed_check(triple, [1], [2], [3])
    assert report.applicable
    assert report.commutator_norm < 1e-10
    assert report.product_defect < 1e-10
    assert report.u_side.matched and report.v_side.matched
    assert report.passed


def test_blocked_vs_collapsed_inapplicable_without_independence(random_222):
    report = blocked_vs_collapsed_check(random_222, [1], [2], [3])
    assert not report.applicable
    assert report.ci_gap > 1e-6
    assert report.to_dict()["applicable"] is False


def test_blocked_vs_collapsed_needs_nonempty_w(product_target):
    with pytest.raises(PreconditionError):
        blocked_vs_collapsed_check(product_target, [1], [2, 3], [])


def test_marginal_chains_are_reversible(random_232):
    for order in ("YZ", "ZY"):
        kernel = marginal_chain(random_232, [1], order)
        assert kernel.reversibility_defect() < 1e-12
        assert kernel.row_sum_defect() < 1e-12
    assert marginal_chain(random_232, [1], "YZ").component == "Z"
    with pytest.raises(PreconditionError):
        marginal_chain(random_232, [1], "XY")


def test_two_component_four_way_equality(random_232):
    report = two_component_spectral_check(random_232, [1])
    assert report.passed
    assert report.max_imaginary <= 1e-8
    assert set(report.matches) == {"cycle_ZY", "Q_Y", "Q_Z"}


def test_two_component_self_adjoint_only_when_independent():
    dependent = two_component_spectral_check(correlated_pair(0.5), [1])
    assert dependent.self_adjoint_defect > 1e-6 and dependent.independence_gap > 1e-6
    assert dependent.criterion_consistent()
    independent = two_component_spectral_check(independent_product([[0.2, 0.8], [0.5, 0.3, 0.2]]), [1])
    assert independent.self_adjoint_defect < 1e-10 and independent.independence_gap < 1e-10
    assert independent.criterion_consistent()


def test_collapsed_inheritance(random_232):
    report = collapsed_inheritance_check(random_232, [1, 2], [(1,), (2,)], weight_samples=2, seed=1)
    assert report.full_gap > 0
    assert report.passed
    assert any(key.startswith("mixture") for key in report.gaps)


@pytest.mark.parametrize("rho", [0.25, 0.5, 0.9])
def test_marginal_chain_second_eigenvalue_is_rho_squared(rho):
    kernel = marginal_chain(correlated_pair(rho), [1], "YZ")
    assert np.sort(np.linalg.eigvals(kernel.matrix).real) == pytest.approx([rho ** 2, 1.0], abs=1e-12)
