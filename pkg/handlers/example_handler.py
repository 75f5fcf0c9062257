import logging
import math

import numpy as np

from config import Config
from services.errors import PreconditionError
from services.hierarchical_example import (
    SAMPLER_IDS, HierModel, ergodicity_contrast, run_chains, verify_drift, verify_minorization,
)
from utils.run_config import CommandResult


class ExampleHandler:
    """Hierarchical-model runs: seeded traces, drift and minorization verification, ergodicity contrast"""

    def __init__(self, services):
        self.services = services

    def _y(self, run_config):
        return float(run_config.option('y', Config.DEFAULT_Y))

    def handle_example(self, run_config):
        """Run one or more samplers and emit their traces"""
        model = HierModel(self._y(run_config))
        sampler = run_config.option('sampler', 'both')
        sampler_ids = ['blockA', 'blockB'] if sampler == 'both' else [sampler]
        if any(s not in SAMPLER_IDS for s in sampler_ids):
            raise PreconditionError(f"unknown sampler {sampler!r}; expected both or one of {', '.join(SAMPLER_IDS)}")
        n_steps = int(run_config.option('steps', 10_000))
        traces = run_chains(model, sampler_ids, n_steps, run_config.seed, Config.MAX_WORKERS)

        result = CommandResult()
        summaries = {}
        for name, trace in sorted(traces.items()):
            excursion = np.abs(trace.w[1:] - model.y)
            summary = {
                'n_steps': trace.n_steps,
                'stream': trace.stream,
                'mean_u': float(np.mean(trace.u[1:])),
                'median_abs_w_minus_y': float(np.median(excursion)),
                'max_abs_w_minus_y': float(np.max(excursion)),
            }
            if trace.rejection_counts is not None:
                summary['mean_proposals'] = float(np.mean(trace.rejection_counts))
            summaries[name] = summary
            result.add_check(f'trace[{name}]_positive_precision', bool(np.all(trace.u[1:] > 0)))
            result.tables[name] = trace.to_frame()
        result.results['y'] = model.y
        result.results['samplers'] = summaries

        if run_config.option('contrast'):
            contrast = ergodicity_contrast(model.y, int(run_config.option('contrast_steps', Config.CONTRAST_STEPS)),
                                           run_config.seed, Config.MAX_WORKERS)
            result.results['ergodicity_contrast'] = contrast.to_dict()
            result.add_check('ergodicity_contrast', contrast.verdict,
                             f"blockA tail acf {contrast.diagnostics['blockA'].tail_acf:.4g}, "
                             f"blockB tail acf {contrast.diagnostics['blockB'].tail_acf:.4g}")
        return result

    def handle_verify_drift(self, run_config):
        y = self._y(run_config)
        points = int(run_config.option('grid_points', 1000))
        grid = np.linspace(y - 100.0, y + 100.0, points)
        report = verify_drift(y, grid)

        result = CommandResult()
        result.results['drift'] = report.to_dict()
        result.add_check('drift_lambda_below_fourth_root_two', report.lam_below_bound,
                         f"lambda {report.lam:.10g}")
        result.add_check('drift_inequality_on_grid', report.min_slack >= -report.slack_tol,
                         f"min slack {report.min_slack:.3e} over {points} points")
        result.add_check('t2_absolute_mean_is_sqrt2', abs(report.abs_t2_mean - math.sqrt(2.0)) <= 1e-8,
                         f"E|t2| {report.abs_t2_mean:.15g}")
        result.tables['drift'] = report.rows
        return result

    def handle_verify_minorization(self, run_config):
        y = self._y(run_config)
        d = run_config.option('d')
        report = verify_minorization(y, float(d) if d is not None else None)

        result = CommandResult()
        result.results['minorization'] = report.to_dict()
        result.add_check('minorization_small_set', report.small_set_holds,
                         f"epsilon {report.epsilon:.6g}, min ratio {report.min_ratio:.6g}")
        result.add_check('minorization_core', report.core_holds,
                         f"epsilon_core {report.epsilon_core:.6g}, min ratio {report.min_ratio_core:.6g}")
        if report.core_constant_violations:
            logging.info(f"Core constant fails at {report.core_constant_violations} grid points outside the core")
        return result

