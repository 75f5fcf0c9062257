import logging

import numpy as np
import pandas as pd

from config import Config
from services.collapsing_marginals import (
    blocked_vs_collapsed_check, collapsed_inheritance_check, collapsed_spectral_check, similarity_check,
    two_component_spectral_check,
)
from services.operator_algebra import (
    Permutation, StepFamily, WeightVector, family_cycle, family_mixture, projector_identity_defects,
)
from services.spectral_analysis import (
    aperiodicity_check, complement_restriction_check, power_rate_estimate, solidarity_suite, spectral_report,
)
from utils.helpers import default_families, parse_family, parse_order, parse_partition, parse_subset, parse_weights
from utils.report_writer import write_matrix_csv
from utils.run_config import CommandResult


class CheckHandler:
    """Finite-state operator checks: spectra, solidarity, collapsing and two-component samplers"""

    def __init__(self, services):
        self.services = services

    def _target(self, run_config):
        return self.services['targets'].load(run_config.target_path)

    def _family(self, run_config, target):
        text = run_config.option('family')
        subsets = parse_family(text) if text else [(i,) for i in range(1, target.K + 1)]
        return StepFamily.of(subsets, target.K)

    def handle_spectra(self, run_config):
        """Spectral report for one cycle or mixture built from a step family"""
        target = self._target(run_config)
        tolerances = run_config.tolerances
        family = self._family(run_config, target)
        mode = run_config.option('mode', 'cycle')
        if mode == 'cycle':
            order = run_config.option('order')
            op = family_cycle(target, family, Permutation(parse_order(order)) if order else None)
        else:
            text = run_config.option('weights')
            weights = WeightVector(parse_weights(text)) if text else WeightVector.uniform(family.g)
            op = family_mixture(target, family, weights)

        result = CommandResult()
        report = spectral_report(op, tolerances)
        result.results['spectral_report'] = report.to_dict()
        result.add_check('spectral_report_invariants', not report.violations(tolerances),
                         ", ".join(report.violations(tolerances)))

        defects = projector_identity_defects(op)
        result.results['projector_identities'] = defects
        result.add_check('projector_identities', max(defects.values()) <= tolerances.algebra,
                         f"max residual {max(defects.values()):.3e}")

        restriction = complement_restriction_check(op, tolerances)
        result.results['complement_restriction'] = restriction.to_dict()
        result.add_check('complement_restriction', restriction.passed,
                         f"r={restriction.radius_full:.12g} vs restricted {restriction.radius_restricted:.12g}")

        aperiodicity = aperiodicity_check(op, tolerances)
        result.results['aperiodicity'] = aperiodicity.to_dict()
        if aperiodicity.irreducible:
            result.add_check('aperiodic_iff_gap', bool(aperiodicity.aperiodic) == report.has_gap,
                             f"aperiodic={aperiodicity.aperiodic}, gap={report.gap:.6g}")

        if report.has_gap:
            rate = power_rate_estimate(op, Config.POWER_RATE_STEPS)
            result.results['power_rate'] = {'n': Config.POWER_RATE_STEPS, 'estimate': rate}
            result.add_check('power_rate', abs(rate - report.spectral_radius) <= Config.POWER_RATE_TOL,
                             f"rate {rate:.6g} vs r {report.spectral_radius:.6g}")

        export = run_config.option('export_matrix')
        if export:
            write_matrix_csv(op, export)

        result.tables['eigenvalues'] = pd.DataFrame({
            'real': report.eigenvalues.real,
            'imag': report.eigenvalues.imag,
            'modulus': np.abs(report.eigenvalues),
        })
        logging.info(f"Spectra for {op.describe()}: r={report.spectral_radius:.6g}")
        return result

    def handle_solidarity(self, run_config):
        """Solidarity suite on the given family, or on the default families for the target"""
        target = self._target(run_config)
        text = run_config.option('family')
        families = [parse_family(text)] if text else default_families(target.K)
        samples = int(run_config.option('weight_samples', Config.DEFAULT_WEIGHT_SAMPLES))

        result = CommandResult()
        verdicts, frames = [], []
        for subsets in families:
            verdict = solidarity_suite(target, subsets, samples, run_config.seed, run_config.tolerances,
                                       Config.MAX_WORKERS)
            verdicts.append(verdict.to_dict())
            frames.append(verdict.to_frame())
            result.add_check(f'solidarity[{verdict.family}]', verdict.passed,
                             f"all_have_gap={verdict.all_have_gap}, consistent={verdict.consistent}, "
                             f"lemma={verdict.lemma_consistent}, adjoint={verdict.adjoint_conjugate}")
        result.results['verdicts'] = verdicts
        result.tables['gaps'] = pd.concat(frames, ignore_index=True)
        return result

    def handle_collapse_check(self, run_config):
        """Similarity, collapsed spectra and, given a partition, blocked vs collapsed comparisons"""
        target = self._target(run_config)
        tolerances = run_config.tolerances
        subset_text = run_config.option('subset')
        subset = parse_subset(subset_text) if subset_text else tuple(range(1, target.K))
        family_text = run_config.option('family')
        family = parse_family(family_text) if family_text else [(i,) for i in subset]

        result = CommandResult()
        similarity = {}
        for J in list(family) + [subset]:
            check = similarity_check(target, subset, J, tolerances)
            key = ",".join(str(j) for j in J)
            similarity[key] = check.to_dict()
            result.add_check(f'similarity[J={key}]', check.holds,
                             f"intertwining {check.intertwining_defect:.3e}, restriction {check.restriction_defect:.3e}")
        result.results['similarity'] = similarity

        collapsed = {}
        for mode in ('cycle', 'mixture'):
            if mode == 'mixture' and len(family) < 2:
                continue
            pair = collapsed_spectral_check(target, subset, family, mode, tolerances=tolerances)
            collapsed[mode] = pair.to_dict()
            result.add_check(f'collapsed_{mode}', pair.passed,
                             f"{pair.match.comparison}, max deviation {pair.match.max_deviation:.3e}")
        result.results['collapsed'] = collapsed

        if run_config.option('inheritance') and target.strictly_positive:
            inherited = collapsed_inheritance_check(target, subset, family, seed=run_config.seed,
                                                    tolerances=tolerances)
            result.results['collapsed_inheritance'] = inherited.to_dict()
            result.add_check('collapsed_inheritance', inherited.passed, f"full gap {inherited.full_gap:.6g}")

        partition = run_config.option('partition')
        if partition:
            U, V, W = parse_partition(partition)
            blocked = blocked_vs_collapsed_check(target, U, V, W, tolerances)
            result.results['blocked_vs_collapsed'] = blocked.to_dict()
            if blocked.applicable:
                result.add_check('blocked_vs_collapsed', blocked.passed,
                                 f"commutator {blocked.commutator_norm:.3e}, product {blocked.product_defect:.3e}")
            else:
                logging.info(f"Partition {partition} is not conditionally independent (gap {blocked.ci_gap:.3e})")
        return result

    def handle_two_component(self, run_config):
        """Cycle and marginal-chain spectra of the two-block split Y | Z"""
        target = self._target(run_config)
        split_text = run_config.option('split')
        split = parse_subset(split_text) if split_text else (1,)
        report = two_component_spectral_check(target, split, run_config.tolerances)

        result = CommandResult()
        result.results['two_component'] = report.to_dict()
        for name, match in report.matches.items():
            result.add_check(f'two_component[cycle_YZ~{name}]', match.matched,
                             f"{match.comparison}, max deviation {match.max_deviation:.3e}")
        result.add_check('two_component_real_spectrum', report.max_imaginary <= run_config.tolerances.spectral,
                         f"max |imag| {report.max_imaginary:.3e}")
        result.add_check('two_component_self_adjoint_iff_independent',
                         report.criterion_consistent(run_config.tolerances),
                         f"defect {report.self_adjoint_defect:.3e}, independence gap {report.independence_gap:.3e}")
        result.tables['spectra'] = pd.DataFrame([
            {'operator': name, 'real': float(v.real), 'imag': float(v.imag)}
            for name, values in report.spectra.items() for v in values
        ])
        return result
