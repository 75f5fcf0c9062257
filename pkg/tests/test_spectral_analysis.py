import numpy as np
import pytest

from config import Tolerances
from services.errors import PreconditionError
from services.operator_algebra import StepFamily, WeightVector, cycle, family_cycle, gibbs_step, mixture, pi_projector
from services.spectral_analysis import (
    aperiodicity_check, complement_restriction_check, full_gibbs_cycle, inheritance_check, match_nonzero_spectra,
    mixture_ordering_check, norm_contraction_check, power_norm_rate, power_rate_estimate, sample_weights,
    solidarity_suite, spectral_report,
)
from services.target_model import correlated_pair, random_target


@pytest.mark.parametrize("rho", [0.25, 0.5, 0.9])
def test_correlated_pair_cycle_radius_is_rho_squared(rho):
    target = correlated_pair(rho)
    report = spectral_report(cycle([gibbs_step(target, [1]), gibbs_step(target, [2])]))
    assert report.spectral_radius == pytest.approx(rho ** 2, abs=1e-8)
    assert report.gap == pytest.approx(1 - rho ** 2, abs=1e-8)
    assert not report.violations()


def test_mixture_radius_equals_norm(random_232):
    report = spectral_report(mixture(StepFamily.full(3).steps(random_232), WeightVector.uniform(3)))
    assert report.is_self_adjoint
    assert report.spectral_radius == pytest.approx(report.pi_operator_norm, abs=1e-8)
    assert np.max(np.abs(report.eigenvalues.imag)) < 1e-8
    assert report.has_gap


def test_spectral_report_dict_is_serializable(rho_pair):
    data = spectral_report(full_gibbs_cycle(rho_pair)).to_dict()
    assert data["violations"] == []
    assert len(data["eigenvalues"]) == 4
    assert all(len(pair) == 2 for pair in data["eigenvalues"])


def test_match_nonzero_spectra_ignores_zeros():
    match = match_nonzero_spectra(np.array([0.5, 0.25, 0.0, 1e-9]), np.array([0.25, 0.5]))
    assert match.matched and match.comparison == "multiset"


def test_match_nonzero_spectra_downgrades_to_set():
    match = match_nonzero_spectra(np.array([0.5, 0.5, 0.25]), np.array([0.5, 0.25]))
    assert match.matched and match.comparison == "set"


def test_match_nonzero_spectra_mismatch():
    match = match_nonzero_spectra(np.array([0.5, 0.3]), np.array([0.5, 0.25]))
    assert not match.matched
    assert match.max_deviation == pytest.approx(0.05)


def test_match_pairs_complex_conjugates():
    left = np.array([0.3 + 0.1j, 0.3 - 0.1j, 0.2])
    right = np.array([0.2, 0.3 - 0.1j, 0.3 + 0.1j])
    assert match_nonzero_spectra(left, right).matched


def test_power_rate_approaches_spectral_radius(random_232):
    op = full_gibbs_cycle(random_232)
    radius = spectral_report(op).spectral_radius
    assert abs(power_rate_estimate(op, 50) - radius) <= 0.05
    norms = power_norm_rate(op, 5)
    assert len(norms) == 5 and all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    with pytest.raises(PreconditionError):
        power_norm_rate(op, 0)


def test_sample_weights_start_with_uniform():
    weights = sample_weights(3, 4, seed=1)
    assert len(weights) == 5
    assert weights[0] == WeightVector.uniform(3)
    assert [w.key() for w in weights] == [w.key() for w in sample_weights(3, 4, seed=1)]


@pytest.mark.parametrize("family", [[(1,), (2,), (3,)], [(1, 2), (2, 3)], [(1,), (1, 2), (3,)]])
def test_solidarity_on_positive_target(random_222, family):
    verdict = solidarity_suite(random_222, family, weight_samples=8, seed=3, max_workers=2)
    g = len(family)
    assert len(verdict.per_ordering_gaps) == {2: 2, 3: 6}[g]
    assert len(verdict.per_weight_gaps) == 9
    assert verdict.all_have_gap and verdict.consistent
    assert verdict.lemma_consistent and verdict.adjoint_conjugate
    assert verdict.passed
    frame = verdict.to_frame()
    assert list(frame.columns) == ["family", "kind", "key", "gap"]
    assert len(frame) == len(verdict.per_ordering_gaps) + 9


def test_solidarity_is_deterministic(random_222):
    first = solidarity_suite(random_222, [(1,), (2,), (3,)], seed=5).to_dict()
    second = solidarity_suite(random_222, [(1,), (2,), (3,)], seed=5, max_workers=1).to_dict()
    assert first == second


def test_solidarity_refuses_large_families(random_222):
    family = [(1,), (2,), (3,), (1,), (2,), (3,), (1, 2)]
    with pytest.raises(PreconditionError):
        solidarity_suite(random_222, family)


def test_inheritance_from_full_gibbs(triple):
    report = inheritance_check(triple, [(1, 2), (2, 3)], weight_samples=3, seed=0)
    assert report.full_gap > 0
    assert report.passed
    assert set(report.cycle_gaps) == {"12", "21"}


def test_norm_contraction_lemma(random_222):
    T = full_gibbs_cycle(random_222).matrix - pi_projector(random_222).matrix
    result = norm_contraction_check([(1,), (2,)], T, random_222)
    assert result.holds and result.lhs <= result.rhs + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_blocked_mixture_is_not_slower(seed):
    target = random_target([2, 2, 2, 2], seed=seed)
    unblocked = [(1,), (2,), (3,), (4,)]
    blocked = [(1,), (2, 3), (2, 3), (4,)]
    assert mixture_ordering_check(target, unblocked, blocked, WeightVector.uniform(4))


def test_mixture_ordering_requires_containment(random_222):
    with pytest.raises(PreconditionError):
        mixture_ordering_check(random_222, [(1, 2), (3,)], [(1,), (2, 3)], WeightVector.uniform(2))


def test_aperiodicity_of_gibbs_operators(random_232):
    result = aperiodicity_check(full_gibbs_cycle(random_232))
    assert result.irreducible and result.aperiodic
    assert len(result.unit_circle_eigenvalues) == 1


def test_aperiodicity_detects_periodic_and_reducible_chains():
    flip = aperiodicity_check(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert flip.irreducible and flip.aperiodic is False
    stuck = aperiodicity_check(np.eye(2))
    assert not stuck.irreducible and stuck.aperiodic is None


def test_complement_restriction_matches_full_spectrum(random_232):
    for op in (full_gibbs_cycle(random_232),
               mixture(StepFamily.full(3).steps(random_232), WeightVector.uniform(3))):
        assert complement_restriction_check(op).passed


def test_tolerance_overrides_flow_into_reports(rho_pair):
    op = family_cycle(rho_pair, StepFamily.full(2))
    loose = Tolerances.from_overrides({"spectral": 1e-4})
    assert loose.spectral == 1e-4
    assert not spectral_report(op, loose).violations(loose)
    with pytest.raises(KeyError):
        Tolerances.from_overrides({"bogus": 1.0})


def test_solidarity_report_does_not_depend_on_worker_count(random_222):
    family = [(1,), (2,), (3,)]
    serial = solidarity_suite(random_222, family, weight_samples=4, seed=5, max_workers=1).to_dict()
    threaded = solidarity_suite(random_222, family, weight_samples=4, seed=5, max_workers=4).to_dict()
    assert serial == threaded
