import logging
import math
from itertools import combinations

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import Config
from services.collapsing_marginals import (
    blocked_vs_collapsed_check, collapsed_spectral_check, two_component_spectral_check,
)
from services.hierarchical_example import (
    FOURTH_ROOT_TWO, SAMPLER_IDS, HierModel, density_mass, ergodicity_contrast, marginal_density_k,
    marginal_density_k_scaled, one_step_invariance, one_step_w_law, rejection_acceptance_curve,
    t2_absolute_moment, t2_absolute_moment_closed_form, verify_drift, verify_minorization,
)
from services.finite_sampler import empirical_check, simulate_cycle, simulate_mixture
from services.operator_algebra import (
    StepFamily, WeightVector, commutator_norm, cycle, gibbs_step, mixture, pi_projector,
)
from services.spectral_analysis import (
    aperiodicity_check, full_gibbs_cycle, inheritance_check, mixture_ordering_check, norm_contraction_check,
    power_rate_estimate, sample_weights, solidarity_suite, spectral_report,
)
from services.target_model import (
    conditional_independence_gap, correlated_pair, random_markov_triple, random_target,
)
from utils.helpers import default_families
from utils.run_config import CommandResult

MIXTURE_ORDERING_CASES = {
    3: [
        ([(1,), (2,), (3,)], [(1, 2), (2,), (3,)]),
        ([(1,), (2,), (3,)], [(1, 2), (1, 2), (3,)]),
        ([(1,), (2,), (3,)], [(1,), (2, 3), (2, 3)]),
    ],
    4: [
        ([(1,), (2,), (3,), (4,)], [(1,), (2, 3), (2, 3), (4,)]),
        ([(1,), (2,), (3,), (4,)], [(1, 2), (1, 2), (3,), (4,)]),
    ],
}


def _proper_subsets(K):
    return [s for r in range(1, K) for s in combinations(range(1, K + 1), r)]


class SuiteHandler:
    """The all-checks acceptance suite over the built-in regression targets"""

    def __init__(self, services):
        self.services = services

    def handle_all_checks(self, run_config):
        fixtures = self.services['targets'].fixtures()
        items = [
            ('projection_axioms', self._projection_axioms),
            ('solidarity', self._solidarity),
            ('inheritance', self._inheritance),
            ('mixture_ordering', self._mixture_ordering),
            ('collapsing_spectra', self._collapsing_spectra),
            ('commuting_criterion', self._commuting_criterion),
            ('correlated_pair', self._correlated_pair),
            ('power_rate', self._power_rate),
            ('aperiodicity', self._aperiodicity),
            ('closed_forms', self._closed_forms),
            ('drift_and_minorization', self._drift_and_minorization),
        ]
        if run_config.option('with_simulation'):
            items += [
                ('simulation_exactness', self._simulation_exactness),
                ('finite_simulation', self._finite_simulation),
                ('ergodicity_contrast', self._ergodicity_contrast),
            ]

        def run(item):
            name, method = item
            partial = CommandResult()
            summary = method(fixtures, run_config, partial)
            logging.info(f"Suite item {name}: {len(partial.failures)} failures out of {len(partial.checks)} checks")
            return name, partial, summary

        outcomes = Parallel(n_jobs=Config.MAX_WORKERS, prefer="threads")(delayed(run)(item) for item in items)

        result = CommandResult()
        rows = []
        for name, partial, summary in outcomes:
            result.results[name] = summary
            for check in partial.checks:
                result.checks.append({**check, 'name': f"{name}/{check['name']}"})
            rows.append({'item': name, 'checks': len(partial.checks), 'failures': len(partial.failures),
                         'passed': partial.passed})
        result.tables['summary'] = pd.DataFrame(rows, columns=['item', 'checks', 'failures', 'passed'])
        return result

    @staticmethod
    def _random_fixtures(fixtures):
        return {name: t for name, t in fixtures.items() if name.startswith('random-')}

    def _projection_axioms(self, fixtures, run_config, result):
        tol = run_config.tolerances.algebra
        worst = 0.0
        count = 0
        for name, target in self._random_fixtures(fixtures).items():
            for subset in _proper_subsets(target.K):
                residuals = gibbs_step(target, subset).residuals()
                count += 1
                worst = max(worst, max(residuals.values()))
                if max(residuals.values()) > tol:
                    result.add_check(f'{name}[{subset}]', False, f"residuals {residuals}")
        result.add_check('all_steps', worst <= tol, f"{count} steps, worst residual {worst:.3e}")
        return {'steps': count, 'worst_residual': worst}

    def _solidarity(self, fixtures, run_config, result):
        summary = {}
        for name, target in fixtures.items():
            if target.K != 3:
                continue
            for family in default_families(3):
                verdict = solidarity_suite(target, family, Config.DEFAULT_WEIGHT_SAMPLES, run_config.seed,
                                           run_config.tolerances, max_workers=1)
                summary[f'{name}[{verdict.family}]'] = {
                    'all_have_gap': verdict.all_have_gap,
                    'consistent': verdict.consistent,
                    'lemma_consistent': verdict.lemma_consistent,
                    'adjoint_conjugate': verdict.adjoint_conjugate,
                }
                result.add_check(f'{name}[{verdict.family}]', verdict.passed)
        return summary

    def _inheritance(self, fixtures, run_config, result):
        tolerances = run_config.tolerances
        summary = {}
        for name, target in fixtures.items():
            for family in default_families(target.K):
                report = inheritance_check(target, family, seed=run_config.seed, tolerances=tolerances)
                summary[f'{name}[{report.family}]'] = report.full_gap
                result.add_check(f'{name}[{report.family}]', report.passed, f"full gap {report.full_gap:.6g}")

        rng = np.random.default_rng(run_config.seed)
        names = list(fixtures)
        worst = math.inf
        for _ in range(Config.NORM_LEMMA_INSTANCES):
            target = fixtures[names[int(rng.integers(len(names)))]]
            subsets = _proper_subsets(target.K)
            family = default_families(target.K)[int(rng.integers(len(default_families(target.K))))]
            T = cycle(StepFamily.of(family, target.K).steps(target)).matrix - pi_projector(target).matrix
            n = int(rng.integers(2, 4))
            chosen = [subsets[int(i)] for i in rng.integers(len(subsets), size=n)]
            check = norm_contraction_check(chosen, T, target, tolerances)
            worst = min(worst, check.rhs - check.lhs)
            if not check:
                result.add_check(f'norm_lemma{chosen}', False, f"lhs {check.lhs:.12g} rhs {check.rhs:.12g}")
        result.add_check('norm_lemma', worst >= -tolerances.norm_slack,
                         f"{Config.NORM_LEMMA_INSTANCES} instances, min slack {worst:.3e}")
        return {'full_gaps': summary, 'norm_lemma_min_slack': worst}

    def _mixture_ordering(self, fixtures, run_config, result):
        rng = np.random.default_rng(run_config.seed)
        tolerances = run_config.tolerances
        worst = math.inf
        checked = 0
        for K in (3, 4):
            for i in range(Config.RANDOM_TARGET_COUNT):
                target = random_target([2] * K, rng=rng)
                for family, blocked in MIXTURE_ORDERING_CASES[K]:
                    weights = (WeightVector.uniform(len(family)) if i % 2 == 0
                               else sample_weights(len(family), 1, int(rng.integers(2 ** 31)))[1])
                    check = mixture_ordering_check(target, family, blocked, weights, tolerances)
                    checked += 1
                    worst = min(worst, check.rhs - check.lhs)
                    if not check:
                        result.add_check(f'K={K}#{i}{blocked}', False,
                                         f"blocked {check.lhs:.12g} > unblocked {check.rhs:.12g}")
        result.add_check('blocked_mixture_not_slower', worst >= -tolerances.norm_slack,
                         f"{checked} comparisons, min slack {worst:.3e}")
        return {'comparisons': checked, 'min_slack': worst}

    def _collapsing_spectra(self, fixtures, run_config, result):
        rng = np.random.default_rng(run_config.seed + 1)
        tolerances = run_config.tolerances
        counts = {'cycle': 0, 'mixture': 0, 'two_component': 0, 'set_only': 0}
        for i in range(Config.RANDOM_TARGET_COUNT):
            K = int(rng.integers(3, 5))
            sizes = [int(s) for s in rng.integers(2, 4, size=K)]
            target = random_target(sizes, rng=rng)
            candidates = [s for s in _proper_subsets(K) if len(s) >= 2]
            subset = candidates[int(rng.integers(len(candidates)))]
            family = [(j,) for j in subset]
            for mode in ('cycle', 'mixture'):
                pair = collapsed_spectral_check(target, subset, family, mode, tolerances=tolerances)
                counts[mode] += 1
                counts['set_only'] += pair.match.comparison == 'set'
                if not pair.passed:
                    result.add_check(f'#{i}{sizes} I={subset} {mode}', False,
                                     f"max deviation {pair.match.max_deviation:.3e}")
            split = (1,) if i % 2 == 0 else tuple(range(1, K // 2 + 1))
            report = two_component_spectral_check(target, split, tolerances)
            counts['two_component'] += 1
            if not report.passed:
                result.add_check(f'#{i}{sizes} split={split}', False, f"max imaginary {report.max_imaginary:.3e}")
        result.add_check('collapsed_and_two_component', not result.failures, f"{counts}")
        return counts

    def _commuting_criterion(self, fixtures, run_config, result):
        rng = np.random.default_rng(run_config.seed + 2)
        tolerances = run_config.tolerances
        independent = [fixtures['markov-triple']] + [
            random_markov_triple([int(s) for s in rng.integers(2, 4, size=3)], rng=rng) for _ in range(10)
        ]
        worst_commutator = worst_product = 0.0
        for i, target in enumerate(independent):
            report = blocked_vs_collapsed_check(target, (1,), (2,), (3,), tolerances)
            if not report.applicable:
                result.add_check(f'independent#{i}', False, f"CI gap {report.ci_gap:.3e}")
                continue
            worst_commutator = max(worst_commutator, report.commutator_norm)
            worst_product = max(worst_product, report.product_defect)
            result.add_check(f'independent#{i}', report.passed and report.commutator_norm < tolerances.algebra,
                             f"commutator {report.commutator_norm:.3e}, product {report.product_defect:.3e}")

        agree = 0
        for i in range(Config.NORM_LEMMA_INSTANCES):
            target = random_target([int(s) for s in rng.integers(2, 4, size=3)], rng=rng)
            commutator = commutator_norm(gibbs_step(target, (1,)), gibbs_step(target, (2,)))
            gap = conditional_independence_gap(target, (1,), (2,), (3,))
            ok = commutator > 1e-6 and gap > 1e-6
            agree += ok
            if not ok:
                result.add_check(f'dependent#{i}', False, f"commutator {commutator:.3e}, CI gap {gap:.3e}")
        result.add_check('dependent_targets', agree == Config.NORM_LEMMA_INSTANCES,
                         f"{agree} of {Config.NORM_LEMMA_INSTANCES} with both criteria positive")
        return {'max_commutator_independent': worst_commutator, 'max_product_defect': worst_product,
                'dependent_agreeing': agree}

    def _correlated_pair(self, fixtures, run_config, result):
        summary = {}
        for rho in (0.25, 0.5, 0.9):
            target = fixtures.get(f'rho-{rho}') or correlated_pair(rho)
            radius = spectral_report(cycle([gibbs_step(target, (1,)), gibbs_step(target, (2,))]),
                                     run_config.tolerances).spectral_radius
            summary[str(rho)] = radius
            result.add_check(f'rho={rho}', abs(radius - rho ** 2) <= run_config.tolerances.spectral,
                             f"r={radius:.17g}, rho^2={rho ** 2:.17g}")
        return summary

    @staticmethod
    def _fixture_operators(fixtures):
        for name, target in fixtures.items():
            family = StepFamily.full(target.K)
            yield f'{name}/cycle', full_gibbs_cycle(target)
            yield f'{name}/mixture', mixture(family.steps(target), WeightVector.uniform(family.g))

    def _power_rate(self, fixtures, run_config, result):
        worst = 0.0
        for label, op in self._fixture_operators(fixtures):
            radius = spectral_report(op, run_config.tolerances).spectral_radius
            rate = power_rate_estimate(op, Config.POWER_RATE_STEPS)
            worst = max(worst, abs(rate - radius))
            if abs(rate - radius) > Config.POWER_RATE_TOL:
                result.add_check(label, False, f"rate {rate:.6g} vs r {radius:.6g}")
        result.add_check('all_fixture_operators', worst <= Config.POWER_RATE_TOL, f"max deviation {worst:.3e}")
        return {'max_deviation': worst}

    def _aperiodicity(self, fixtures, run_config, result):
        checked = 0
        for label, op in self._fixture_operators(fixtures):
            check = aperiodicity_check(op, run_config.tolerances)
            checked += 1
            if not check.aperiodic:
                result.add_check(label, False, f"unit-circle eigenvalues {check.unit_circle_eigenvalues}")
        result.add_check('all_fixture_operators', not result.failures, f"{checked} operators")
        return {'operators': checked}

    def _closed_forms(self, fixtures, run_config, result):
        y = float(run_config.option('y', Config.DEFAULT_Y))
        grid = y + np.linspace(-50.0, 50.0, 100)
        W, Wp = np.meshgrid(grid, grid, indexing='ij')
        agreement = float(np.max(np.abs(marginal_density_k(W, Wp, y) - marginal_density_k_scaled(W, Wp, y))))
        result.add_check('density_forms_agree', agreement <= 1e-12, f"max difference {agreement:.3e}")

        masses = [density_mass(float(w), y) for w in y + np.arange(-10.0, 11.0)]
        mass_error = float(max(abs(m - 1.0) for m in masses))
        result.add_check('density_mass', mass_error <= Config.DENSITY_MASS_TOL, f"max |mass-1| {mass_error:.3e}")

        abs_mean = t2_absolute_moment(1.0)
        result.add_check('t2_absolute_mean', abs(abs_mean - math.sqrt(2.0)) <= 1e-8, f"{abs_mean:.17g}")

        lam = t2_absolute_moment(0.5)
        lam_closed = t2_absolute_moment_closed_form(0.5)
        result.add_check('lambda_matches_closed_form', abs(lam - lam_closed) <= 1e-8, f"{lam:.17g} vs {lam_closed:.17g}")
        result.add_check('lambda_below_fourth_root_two', lam < FOURTH_ROOT_TWO, f"{lam:.10g} < {FOURTH_ROOT_TWO:.10g}")
        return {'y': y, 'form_difference': agreement, 'max_mass_error': mass_error, 'abs_t2_mean': abs_mean,
                'lambda': lam, 'lambda_closed_form': lam_closed}

    def _drift_and_minorization(self, fixtures, run_config, result):
        y = float(run_config.option('y', Config.DEFAULT_Y))
        drift = verify_drift(y)
        result.add_check('drift', drift.passed, f"min slack {drift.min_slack:.3e}")
        minorization = verify_minorization(y)
        result.add_check('minorization', minorization.passed,
                         f"d={minorization.d:.6g}, min core ratio {minorization.min_ratio_core:.6g}")
        return {'drift': drift.to_dict(), 'minorization': minorization.to_dict()}

    def _simulation_exactness(self, fixtures, run_config, result):
        model = HierModel(float(run_config.option('y', Config.DEFAULT_Y)))
        summary = {'kernel_law': {}, 'invariance': {}}
        for offset in (0.0, 1.0, 5.0):
            report = one_step_w_law(model, model.y + offset, seed=run_config.seed)
            summary['kernel_law'][str(offset)] = report.to_dict()
            result.add_check(f'blockA_kernel_law[w=y+{offset:g}]', report.passed,
                             f"KS {report.statistic:.3e} vs critical {report.critical_value:.3e}")
        curve = rejection_acceptance_curve(model, seed=run_config.seed)
        summary['acceptance_curve'] = curve.to_dict()
        result.add_check('blockB_acceptance_curve', curve.passed, f"max |z| {curve.max_abs_z:.3f}")
        for sampler_id in SAMPLER_IDS:
            report = one_step_invariance(model, sampler_id, seed=run_config.seed)
            summary['invariance'][sampler_id] = report.to_dict()
            result.add_check(f'invariance[{sampler_id}]', report.passed, f"p-values {report.p_values}")
        return summary

    def _finite_simulation(self, fixtures, run_config, result):
        summary = {}
        cases = [
            ('rho-0.5/cycle', fixtures['rho-0.5'], 'cycle', [(1,), (2,)]),
            ('markov-triple/cycle', fixtures['markov-triple'], 'cycle', [(1,), (2,), (3,)]),
            ('markov-triple/mixture', fixtures['markov-triple'], 'mixture', [(1, 2), (2, 3)]),
        ]
        for label, target, scheme, subsets in cases:
            if scheme == 'cycle':
                trace = simulate_cycle(target, subsets, 100_000, run_config.seed)
            else:
                trace = simulate_mixture(target, subsets, WeightVector.uniform(len(subsets)), 100_000,
                                         run_config.seed)
            report = empirical_check(target, trace)
            summary[label] = report.to_dict()
            result.add_check(label, report.passed,
                             f"max z {report.max_transition_z:.3f}, occupation TV {report.occupation_tv:.4f}")
        return summary

    def _ergodicity_contrast(self, fixtures, run_config, result):
        contrast = ergodicity_contrast(float(run_config.option('y', Config.DEFAULT_Y)), Config.CONTRAST_STEPS,
                                       Config.CONTRAST_SEED, Config.MAX_WORKERS)
        a, b = contrast.diagnostics['blockA'], contrast.diagnostics['blockB']
        result.add_check('blockA_decorrelates', contrast.block_a_decorrelates,
                         f"lag {a.decorrelation_lag}, tail acf {a.tail_acf:.4g}")
        result.add_check('blockB_persists', contrast.block_b_persists,
                         f"lag {b.decorrelation_lag}, tail acf {b.tail_acf:.4g}")
        return contrast.to_dict()
