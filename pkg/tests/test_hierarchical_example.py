import math

import numpy as np
import pytest
from scipy import stats

from config import Config
from services.errors import PreconditionError, TargetError
from services.hierarchical_example import (
    FOURTH_ROOT_TWO, HierModel, HierState, autocorrelation, conditionals, density_mass, draw_w_given_v,
    ContrastReport, SamplerDiagnostics, contrast_seeds, decorrelation_lag, ergodicity_contrast, hill_tail_index,
    log_linear_fit, marginal_density_k, marginal_density_k_scaled,
    one_step_invariance, one_step_w_law, rejection_acceptance_curve, run_chain, run_chains, small_set_threshold,
    t2_absolute_moment, t2_absolute_moment_closed_form, tail_autocorrelation, verify_drift, verify_minorization,
)


def test_acceptance_probability():
    model = HierModel(2.0)
    assert model.acceptance(2.0) == 1.0
    assert model.acceptance(3.0) == 0.5
    assert model.acceptance(1.0) == 0.5
    assert model.rate(2.0) == 0.5


def test_model_rejects_non_finite_observation():
    with pytest.raises(TargetError):
        HierModel(float("inf"))


def test_conditionals_need_positive_precision():
    with pytest.raises(PreconditionError):
        conditionals(HierModel(0.0), HierState(0.0, 0.0, 0.0))


def test_conditional_laws_at_a_state():
    laws = conditionals(HierModel(1.0), HierState(3.0, 0.5, 2.0))
    assert laws.w_given_uv.mean() == pytest.approx((3.0 * 1.0 + 0.5) / 4.0)
    assert laws.w_given_uv.var() == pytest.approx(0.25)
    assert laws.u_given_w.mean() == pytest.approx(1.0 / 1.0)
    assert laws.w_given_v.normalizer > 0
    grid = np.linspace(-5, 5, 7)
    assert np.all(laws.w_given_v.pdf(grid) > 0)


@pytest.mark.parametrize("y", Config.TRANSLATION_Y_VALUES)
def test_density_forms_agree(y):
    grid = y + np.linspace(-50.0, 50.0, 100)
    W, Wp = np.meshgrid(grid, grid, indexing="ij")
    assert np.max(np.abs(marginal_density_k(W, Wp, y) - marginal_density_k_scaled(W, Wp, y))) <= 1e-12


@pytest.mark.parametrize("y", Config.TRANSLATION_Y_VALUES)
@pytest.mark.parametrize("offset", [-10.0, -1.0, 0.0, 3.0, 10.0])
def test_density_integrates_to_one(y, offset):
    assert density_mass(y + offset, y) == pytest.approx(1.0, abs=1e-6)


def test_kernel_is_a_scaled_t2():
    y, w = 0.0, 1.5
    tau = float(HierModel(y).tau(w))
    xs = np.linspace(-20, 20, 41)
    assert np.allclose(marginal_density_k(w, xs, y), stats.t.pdf(xs, df=2, loc=y, scale=tau), atol=1e-14)


def test_t2_moments():
    assert t2_absolute_moment(1.0) == pytest.approx(math.sqrt(2.0), abs=1e-8)
    lam = t2_absolute_moment(0.5)
    assert lam == pytest.approx(t2_absolute_moment_closed_form(0.5), abs=1e-8)
    assert lam == pytest.approx(1.0075, abs=1e-4)
    assert lam < FOURTH_ROOT_TWO
    assert small_set_threshold(lam) > 0


@pytest.mark.parametrize("y", Config.TRANSLATION_Y_VALUES)
def test_drift_inequality_on_coarse_grid(y):
    report = verify_drift(y, np.linspace(y - 100.0, y + 100.0, 41))
    assert report.passed
    assert report.contraction < 1.0
    assert report.max_identity_error < 1e-6
    assert report.to_dict()["grid_points"] == 41


def test_minorization_on_small_set():
    report = verify_minorization(0.0)
    assert report.small_set_holds and report.core_holds
    assert report.passed
    assert report.d == pytest.approx(Config.SMALL_SET_INFLATION * report.threshold)
    assert report.epsilon == pytest.approx((1 + report.d ** 4) ** -0.5)
    assert report.min_ratio_core >= report.epsilon_core - 1e-12


def test_minorization_refuses_radius_below_threshold():
    with pytest.raises(PreconditionError):
        verify_minorization(0.0, d=1.0)


def test_rejection_sampler_reports_attempts(rng):
    model = HierModel(0.0)
    for v in (-4.0, 0.0, 0.5, 12.0):
        w, attempts = draw_w_given_v(model, v, rng)
        assert math.isfinite(w) and attempts >= 1


@pytest.mark.parametrize("sampler_id", ["blockA", "blockB", "full"])
def test_chains_are_reproducible(sampler_id):
    model = HierModel(0.0)
    first = run_chain(model, sampler_id, 300, seed=9)
    second = run_chain(model, sampler_id, 300, seed=9)
    assert np.array_equal(first.states, second.states)
    assert np.all(first.u[1:] > 0)
    frame = first.to_frame()
    assert list(frame.columns) == ["step", "u", "v", "w"]
    assert len(frame) == 301


def test_block_b_records_rejections():
    trace = run_chain(HierModel(1.0), "blockB", 200, seed=3)
    assert trace.rejection_counts.shape == (200,)
    assert trace.rejection_counts.min() >= 1


def test_block_a_is_translation_equivariant():
    base = run_chain(HierModel(0.0), "blockA", 200, seed=4)
    shifted = run_chain(HierModel(7.0), "blockA", 200, seed=4)
    assert np.allclose(shifted.w - 7.0, base.w, atol=1e-8)
    assert np.allclose(shifted.u, base.u, rtol=1e-8)


def test_run_chain_argument_checks():
    with pytest.raises(PreconditionError):
        run_chain(HierModel(0.0), "blockC", 10)
    with pytest.raises(PreconditionError):
        run_chain(HierModel(0.0), "blockA", 0)
    with pytest.raises(PreconditionError):
        run_chain(HierModel(0.0), "blockA", 10, initial=HierState(-1.0, 0.0, 0.0))


def test_run_chains_use_distinct_streams():
    traces = run_chains(HierModel(0.0), ["blockB", "blockA"], 100, seed=1, max_workers=1)
    assert sorted(traces) == ["blockA", "blockB"]
    assert traces["blockA"].stream == 0 and traces["blockB"].stream == 1
    again = run_chains(HierModel(0.0), ["blockA", "blockB"], 100, seed=1, max_workers=1)
    assert np.array_equal(traces["blockB"].states, again["blockB"].states)


def test_one_step_w_law_matches_kernel():
    report = one_step_w_law(HierModel(0.0), 1.0, n=200_000, seed=5)
    assert report.passed


@pytest.mark.parametrize("sampler_id", ["blockA", "full"])
def test_one_step_invariance_vectorized(sampler_id):
    assert one_step_invariance(HierModel(0.0), sampler_id, n=50_000, seed=6).passed


@pytest.mark.parametrize("y", [0.0, 7.0])
def test_one_step_invariance_block_b(y):
    assert one_step_invariance(HierModel(y), "blockB", n=20_000, seed=6).passed


def test_rejection_acceptance_curve():
    curve = rejection_acceptance_curve(HierModel(0.0), n_proposals=50_000, seed=8)
    assert curve.passed
    assert len(curve.bins) == 6


def test_autocorrelation_and_fit():
    x = np.random.default_rng(0).standard_normal(100_000)
    acf = autocorrelation(x, 10)
    assert acf[0] == pytest.approx(1.0)
    assert np.max(np.abs(acf[1:])) < 0.02
    geometric = 0.5 ** np.arange(11)
    r2, slope, lags = log_linear_fit(geometric, 10, noise_floor=1e-6)
    assert r2 == pytest.approx(1.0)
    assert slope == pytest.approx(math.log(0.5))
    assert lags == 10
    r2, _, lags = log_linear_fit(np.array([1.0, 0.001, 0.0]), 2, noise_floor=0.01)
    assert math.isnan(r2) and lags == 0


def test_hill_estimate_for_cauchy_tails():
    x = stats.cauchy.rvs(size=200_000, random_state=1)
    assert hill_tail_index(x) == pytest.approx(1.0, abs=0.2)


@pytest.mark.parametrize("n", [0, 5, 10])
def test_hill_estimate_needs_more_than_the_tail(n):
    assert math.isnan(hill_tail_index(np.arange(1.0, n + 1.0)))


@pytest.mark.slow
def test_ergodicity_contrast_separates_samplers():
    report = ergodicity_contrast(0.0, Config.CONTRAST_STEPS, Config.CONTRAST_SEED, max_workers=2)
    block_a, block_b = report.diagnostics["blockA"], report.diagnostics["blockB"]
    assert abs(block_a.acf[50]) < 0.01
    assert block_b.acf[50] > 0.3
    assert block_a.decorrelation_lag is not None and block_b.decorrelation_lag is None
    assert report.block_a_decorrelates and report.block_b_persists
    assert report.verdict
    assert report.to_dict()["seeds"] == {"blockA": 42, "blockB": 42}
    assert report.to_dict()["diagnostics"]["blockA"]["sampler_id"] == "blockA"


def test_contrast_refuses_short_runs():
    with pytest.raises(PreconditionError):
        ergodicity_contrast(0.0, 1000)


def test_decorrelation_lag_and_tail_mean():
    acf = np.concatenate([[1.0], 0.5 ** np.arange(1, 51)])
    assert decorrelation_lag(acf, 50, noise_floor=0.004) == 8
    assert decorrelation_lag(np.full(51, 0.4), 50, noise_floor=0.004) is None
    assert decorrelation_lag(np.full(51, np.nan), 50, noise_floor=0.004) is None
    assert tail_autocorrelation(np.arange(51.0), 50, tail_lags=10) == pytest.approx(45.5)


def _diagnostics(sampler_id, lag, tail):
    return SamplerDiagnostics(sampler_id, np.zeros(51), float("nan"), float("nan"), 0, lag, tail,
                              1.0, 0.0, {}, {})


@pytest.mark.parametrize("a_lag, a_tail, b_lag, b_tail, verdict", [
    (3, 0.001, None, 0.35, True),
    (None, 0.001, None, 0.35, False),
    (3, 0.05, None, 0.35, False),
    (3, 0.001, 40, 0.35, False),
    (3, 0.001, None, 0.05, False),
    (3, float("nan"), None, 0.35, False),
    (3, 0.001, None, float("nan"), False),
])
def test_contrast_verdict(a_lag, a_tail, b_lag, b_tail, verdict):
    report = ContrastReport(0.0, 1_000_000, {"blockA": 1, "blockB": 2}, 0.004, {
        "blockA": _diagnostics("blockA", a_lag, a_tail),
        "blockB": _diagnostics("blockB", b_lag, b_tail),
    })
    assert report.verdict is verdict
    assert report.to_dict()["verdict"] is verdict


def test_contrast_seed_forms():
    assert contrast_seeds(42) == 42
    assert contrast_seeds((3, 4)) == {"blockA": 3, "blockB": 4}
    assert contrast_seeds({"blockB": 9, "blockA": 8}) == {"blockA": 8, "blockB": 9}
    with pytest.raises(PreconditionError):
        contrast_seeds([1, 2, 3])
    with pytest.raises(PreconditionError):
        contrast_seeds({"blockA": 1})


def test_run_chains_with_a_seed_per_sampler():
    model = HierModel(0.0)
    traces = run_chains(model, ["blockA", "blockB"], 100, seed={"blockA": 5, "blockB": 6}, max_workers=1)
    assert traces["blockA"].seed == 5 and traces["blockB"].seed == 6
    assert np.array_equal(traces["blockA"].states, run_chain(model, "blockA", 100, seed=5).states)
    assert np.array_equal(traces["blockB"].states, run_chain(model, "blockB", 100, seed=6).states)
    with pytest.raises(PreconditionError):
        run_chains(model, ["blockA", "blockB"], 100, seed={"blockA": 5}, max_workers=1)


def test_parallel_chains_match_serial_chains():
    model = HierModel(-3.0)
    serial = run_chains(model, ["blockA", "blockB"], 200, seed=9, max_workers=1)
    parallel = run_chains(model, ["blockA", "blockB"], 200, seed=9, max_workers=2)
    for name in ("blockA", "blockB"):
        assert np.array_equal(serial[name].states, parallel[name].states)
