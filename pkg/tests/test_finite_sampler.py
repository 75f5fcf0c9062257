import numpy as np
import pytest

from services.errors import PreconditionError
from services.finite_sampler import (
    FiniteTrace, empirical_check, empirical_transition_matrix, simulate_cycle, simulate_mixture,
)
from services.operator_algebra import WeightVector, gibbs_step
from services.target_model import build_target


def test_cycle_simulation_matches_operator(rho_pair):
    trace = simulate_cycle(rho_pair, [(1,), (2,)], 50_000, seed=3)
    report = empirical_check(rho_pair, trace)
    assert report.passed
    assert report.occupation_tv < 0.02


def test_mixture_simulation_matches_operator(triple):
    trace = simulate_mixture(triple, [(1, 2), (2, 3)], WeightVector((0.4, 0.6)), 50_000, seed=4)
    assert trace.scheme == "mixture"
    assert empirical_check(triple, trace).passed


def test_simulation_is_reproducible(random_222):
    first = simulate_cycle(random_222, [(1,), (2,), (3,)], 500, seed=1, start=5)
    second = simulate_cycle(random_222, [(1,), (2,), (3,)], 500, seed=1, start=5)
    assert np.array_equal(first.states, second.states)
    assert first.states[0] == 5


def test_trace_frame_lists_coordinates(random_232):
    frame = simulate_cycle(random_232, [(1,), (2, 3)], 20, seed=2).to_frame(random_232)
    assert list(frame.columns) == ["step", "state", "x1", "x2", "x3"]
    assert len(frame) == 21
    assert frame["x2"].max() <= 2


def test_start_state_must_exist(rho_pair):
    with pytest.raises(PreconditionError):
        simulate_cycle(rho_pair, [(1,), (2,)], 10, start=4)


def test_empirical_transition_matrix_rows():
    empirical, visits = empirical_transition_matrix(np.array([0, 1, 0, 1, 1]), 3)
    assert visits.tolist() == [2.0, 2.0, 0.0]
    assert np.allclose(empirical[0], [0.0, 1.0, 0.0])
    assert np.allclose(empirical[1], [0.5, 0.5, 0.0])
    assert np.allclose(empirical[2], 0.0)


def test_forbidden_transitions_fail_the_check():
    target = build_target([2, 2], [1, 2, 3, 4])
    trace = FiniteTrace("cycle", np.tile([0, 3], 500), seed=0, operator=gibbs_step(target, [2]))
    report = empirical_check(target, trace)
    assert report.impossible_transitions == 2
    assert not report.passed
    assert report.to_dict()["impossible_transitions"] == 2
