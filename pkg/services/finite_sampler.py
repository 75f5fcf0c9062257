"""Simulation of deterministic-scan and random-scan Gibbs samplers on finite targets.

Chains move on flat state indices. Each Gibbs step draws the next state from
the corresponding row of its ProjectorMatrix, so the empirical one-step law can
be compared entry by entry with the operator.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from config import Config
from services.errors import PreconditionError
from services.operator_algebra import ProjectorMatrix, WeightVector, cycle, gibbs_step, mixture
from services.target_model import JointTarget


@dataclass
class FiniteTrace:
    scheme: str
    states: np.ndarray = field(repr=False)
    seed: int
    operator: ProjectorMatrix = field(repr=False)

    def to_frame(self, target: JointTarget):
        labels = np.array([target.space.multi_index(s) for s in self.states])
        frame = pd.DataFrame(labels, columns=[f"x{i}" for i in range(1, target.K + 1)])
        frame.insert(0, "state", self.states)
        frame.insert(0, "step", np.arange(len(frame)))
        return frame


def _draw(cumulative_rows, state, u):
    row = cumulative_rows[state]
    return min(int(np.searchsorted(row, u, side="right")), len(row) - 1)


def _cumulative(step: ProjectorMatrix):
    return np.cumsum(step.matrix, axis=1)


def _start_state(target, start):
    if start is None:
        return 0
    start = int(start)
    if not 0 <= start < target.dim:
        raise PreconditionError(f"start state {start} outside 0..{target.dim - 1}")
    return start


def simulate_cycle(target: JointTarget, subsets, n_steps, seed=Config.DEFAULT_SEED,
                   start: Optional[int] = None) -> FiniteTrace:
    """Deterministic scan: each recorded step is one sweep through the subsets in order"""
    steps = [gibbs_step(target, s) for s in subsets]
    operator = cycle(steps)
    tables = [_cumulative(s) for s in steps]
    rng = np.random.default_rng(seed)
    uniforms = rng.random((n_steps, len(steps)))
    states = np.empty(n_steps + 1, dtype=np.int64)
    states[0] = state = _start_state(target, start)
    for n in range(n_steps):
        for d, table in enumerate(tables):
            state = _draw(table, state, uniforms[n, d])
        states[n + 1] = state
    logging.info(f"Simulated {n_steps} sweeps of {operator.describe()}")
    return FiniteTrace("cycle", states, seed, operator)


def simulate_mixture(target: JointTarget, subsets, weights, n_steps, seed=Config.DEFAULT_SEED,
                     start: Optional[int] = None) -> FiniteTrace:
    """Random scan: pick step d with probability w_d, then apply it"""
    steps = [gibbs_step(target, s) for s in subsets]
    weights = weights if isinstance(weights, WeightVector) else WeightVector(tuple(weights))
    operator = mixture(steps, weights)
    tables = [_cumulative(s) for s in steps]
    rng = np.random.default_rng(seed)
    choices = rng.choice(len(steps), size=n_steps, p=np.asarray(weights.weights))
    uniforms = rng.random(n_steps)
    states = np.empty(n_steps + 1, dtype=np.int64)
    states[0] = state = _start_state(target, start)
    for n in range(n_steps):
        state = _draw(tables[choices[n]], state, uniforms[n])
        states[n + 1] = state
    logging.info(f"Simulated {n_steps} random-scan steps of {operator.describe()}")
    return FiniteTrace("mixture", states, seed, operator)


def empirical_transition_matrix(states, dim):
    """Row-normalized transition counts and the visit count of each row"""
    counts = np.zeros((dim, dim))
    np.add.at(counts, (states[:-1], states[1:]), 1.0)
    visits = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        empirical = np.where(visits[:, None] > 0, counts / visits[:, None], 0.0)
    return empirical, visits


@dataclass
class EmpiricalReport:
    max_transition_z: float
    occupation_tv: float
    impossible_transitions: int = 0
    z_limit: float = 5.0
    tv_limit: float = 0.02

    @property
    def passed(self):
        return (self.impossible_transitions == 0 and self.max_transition_z <= self.z_limit
                and self.occupation_tv <= self.tv_limit)

    def to_dict(self):
        return {
            "max_transition_z": self.max_transition_z,
            "occupation_tv": self.occupation_tv,
            "impossible_transitions": self.impossible_transitions,
            "z_limit": self.z_limit,
            "tv_limit": self.tv_limit,
            "passed": self.passed,
        }


def empirical_check(target: JointTarget, trace: FiniteTrace) -> EmpiricalReport:
    """Empirical one-step frequencies against the operator, occupation measure against π"""
    empirical, visits = empirical_transition_matrix(trace.states, target.dim)
    expected = trace.operator.matrix
    variance = expected * (1.0 - expected) / np.maximum(visits[:, None], 1.0)
    deviation = np.abs(empirical - expected)
    z = np.where(variance > 0, deviation / np.sqrt(np.where(variance > 0, variance, 1.0)), 0.0)
    z[visits == 0] = 0.0
    # pairs the operator forbids must never be observed
    impossible = int(np.count_nonzero((expected == 0.0) & (empirical > 0.0)))
    if impossible:
        logging.error(f"Trace makes {impossible} transition(s) the operator assigns probability zero")
    occupation = np.bincount(trace.states, minlength=target.dim) / len(trace.states)
    tv = 0.5 * float(np.abs(occupation - target.probs).sum())
    return EmpiricalReport(float(z.max()), tv, impossible)
