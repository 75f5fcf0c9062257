"""Gibbs steps, Π, cycles and mixtures as dense matrices on the flat joint space.

A matrix Q acts on functions by (Qf)(x) = Σ_y Q(x, y) f(y), so row x is the
law of the next state. The operator P_{F1}P_{F2}...P_{Fg} is the matrix
product M1 @ M2 @ ... @ Mg, i.e. the kernel of "update F1 first, then F2,
..., then Fg". Reversing the order gives the π-adjoint.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import chain
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from config import DEFAULT_TOLERANCES
from services.errors import OperatorError, PreconditionError, SubsetError
from services.target_model import CoordinateSubset, JointTarget


class OperatorKind(str, Enum):
    GIBBS_STEP = "gibbs_step"
    PI_PROJECTOR = "pi_projector"
    CYCLE = "cycle"
    MIXTURE = "mixture"
    GENERAL = "general"


@dataclass(frozen=True, eq=False)
class ProjectorMatrix:
    """Markov operator on a finite target plus how it was built"""
    matrix: np.ndarray = field(repr=False)
    target: JointTarget = field(repr=False)
    kind: OperatorKind
    subsets: Tuple[Tuple[int, ...], ...] = ()
    label: str = ""

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def probs(self):
        return self.target.probs

    def residuals(self):
        """Invariant residuals (max-abs) keyed by invariant name"""
        Q, p = self.matrix, self.probs
        out = {
            "row_sums": float(np.max(np.abs(Q.sum(axis=1) - 1.0))),
            "stationarity": float(np.max(np.abs(p @ Q - p))),
        }
        if self.kind in (OperatorKind.GIBBS_STEP, OperatorKind.MIXTURE, OperatorKind.PI_PROJECTOR):
            out["self_adjoint"] = float(np.max(np.abs(symmetrized(Q, p) - symmetrized(Q, p).T)))
        if self.kind in (OperatorKind.GIBBS_STEP, OperatorKind.PI_PROJECTOR):
            out["idempotent"] = float(np.max(np.abs(Q @ Q - Q)))
        return out

    def validate(self, tol=None):
        """Raise OperatorError if any structural invariant is violated"""
        tol = DEFAULT_TOLERANCES.algebra if tol is None else tol
        residuals = self.residuals()
        logging.debug(f"{self.describe()} residuals: {residuals}")
        broken = {name: value for name, value in residuals.items() if not value <= tol}
        if broken:
            logging.error(f"{self.describe()} violates invariants: {broken}")
            raise OperatorError(f"{self.describe()} violates invariants {sorted(broken)} (tol {tol:g})")
        return self

    def describe(self):
        return self.label or self.kind.value

    def to_frame(self):
        """Matrix as a DataFrame indexed by flat state index"""
        index = pd.RangeIndex(self.dim, name="state")
        return pd.DataFrame(self.matrix, index=index, columns=[str(j) for j in range(self.dim)])


@dataclass(frozen=True)
class StepFamily:
    """Subsets I_1..I_g whose union is every coordinate"""
    subsets: Tuple[CoordinateSubset, ...]
    n_coordinates: int

    def __post_init__(self):
        subsets = tuple(CoordinateSubset.of(s, self.n_coordinates) for s in self.subsets)
        if len(subsets) < 2:
            raise SubsetError(f"a step family needs g >= 2 subsets, got {len(subsets)}")
        missing = set(range(1, self.n_coordinates + 1)) - set(chain.from_iterable(s.indices for s in subsets))
        if missing:
            raise SubsetError(f"family {[list(s.indices) for s in subsets]} does not cover coordinates {sorted(missing)}")
        object.__setattr__(self, "subsets", subsets)

    @classmethod
    def of(cls, subsets, n_coordinates):
        if isinstance(subsets, StepFamily):
            return subsets
        return cls(tuple(subsets), n_coordinates)

    @classmethod
    def full(cls, n_coordinates):
        """Single-coordinate family {1},...,{K}"""
        return cls(tuple((i,) for i in range(1, n_coordinates + 1)), n_coordinates)

    @property
    def g(self):
        return len(self.subsets)

    def steps(self, target):
        return [gibbs_step(target, s) for s in self.subsets]

    def __str__(self):
        return ";".join(",".join(str(i) for i in s.indices) for s in self.subsets)


@dataclass(frozen=True)
class WeightVector:
    """Element of the open simplex 𝒮_g"""
    weights: Tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise SubsetError("weight vector is empty")
        if any(not x > 0 for x in w):
            raise SubsetError(f"weights must be strictly positive, got {list(w)}")
        if abs(sum(w) - 1.0) > DEFAULT_TOLERANCES.normalization:
            raise SubsetError(f"weights must sum to 1, got {sum(w)!r}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, g):
        return cls(tuple([1.0 / g] * g))

    @property
    def g(self):
        return len(self.weights)

    def key(self):
        return tuple(round(x, 12) for x in self.weights)

    def __str__(self):
        return "(" + ",".join(f"{x:.6g}" for x in self.weights) + ")"


@dataclass(frozen=True)
class Permutation:
    """Bijection on {1,...,g}, 1-based"""
    order: Tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(1, len(order) + 1)):
            raise SubsetError(f"{list(order)} is not a permutation of 1..{len(order)}")
        object.__setattr__(self, "order", order)

    def apply(self, items):
        return [items[i - 1] for i in self.order]

    def reversed(self):
        return Permutation(tuple(reversed(self.order)))

    def __str__(self):
        return "".join(str(i) for i in self.order) if len(self.order) < 10 else "-".join(map(str, self.order))


def symmetrized(matrix, probs):
    """D^{1/2} M D^{-1/2}; symmetric exactly when M is π-self-adjoint"""
    root = np.sqrt(probs)
    return root[:, None] * matrix / root[None, :]


def _require_positive(target):
    if not target.strictly_positive:
        raise PreconditionError("operators are only built on strictly positive targets")


def _freeze(matrix):
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    matrix.setflags(write=False)
    return matrix


def gibbs_step(target: JointTarget, subset) -> ProjectorMatrix:
    """P_F for F = functions not depending on x_I: resample x_I from π(·|x_{-I})"""
    _require_positive(target)
    subset = CoordinateSubset.of(subset, target.K)
    states = target.space.states()
    rest_axes = [i - 1 for i in subset.complement()]
    rest_shape = tuple(target.space.shape[a] for a in rest_axes)
    keys = np.ravel_multi_index(tuple(states[:, a] for a in rest_axes), rest_shape)
    slice_mass = np.bincount(keys, weights=target.probs, minlength=int(np.prod(rest_shape)))
    if np.any(slice_mass[keys] <= 0):
        raise PreconditionError(f"zero-mass conditioning slice for I={subset}")
    same_slice = keys[:, None] == keys[None, :]
    matrix = np.where(same_slice, target.probs[None, :] / slice_mass[keys][:, None], 0.0)
    op = ProjectorMatrix(_freeze(matrix), target, OperatorKind.GIBBS_STEP, (subset.indices,), f"P[{subset}]")
    return op.validate()


def pi_projector(target: JointTarget) -> ProjectorMatrix:
    """Π: every row equals πᵀ"""
    matrix = np.tile(target.probs, (target.dim, 1))
    everything = tuple(range(1, target.K + 1))
    return ProjectorMatrix(_freeze(matrix), target, OperatorKind.PI_PROJECTOR, (everything,), "Pi")


def block_step(target: JointTarget, indices) -> ProjectorMatrix:
    """gibbs_step over the given coordinates, or Π when they cover all of them"""
    indices = tuple(sorted(set(int(i) for i in indices)))
    if len(indices) == target.K:
        return pi_projector(target)
    return gibbs_step(target, indices)


def _shared_target(steps):
    if not steps:
        raise SubsetError("at least one step is required")
    target = steps[0].target
    for step in steps[1:]:
        if step.target is not target and not np.array_equal(step.target.probs, target.probs):
            raise SubsetError("steps are built on different targets")
    return target


def _require_cover(target, steps):
    covered = set(chain.from_iterable(chain.from_iterable(s.subsets for s in steps)))
    missing = set(range(1, target.K + 1)) - covered
    if missing:
        raise SubsetError(f"steps do not cover coordinates {sorted(missing)}")


def compose(steps: Sequence[ProjectorMatrix], kind=OperatorKind.GENERAL, label=None) -> ProjectorMatrix:
    """Chronological product steps[0] @ steps[1] @ ... with no cover requirement"""
    target = _shared_target(steps)
    matrix = steps[0].matrix
    for step in steps[1:]:
        matrix = matrix @ step.matrix
    subsets = tuple(chain.from_iterable(s.subsets for s in steps))
    label = label or " ".join(s.describe() for s in steps)
    return ProjectorMatrix(_freeze(matrix), target, kind, subsets, label)


def cycle(steps: Sequence[ProjectorMatrix]) -> ProjectorMatrix:
    """Deterministic scan: P_{F1}...P_{Fg}, steps applied in list order"""
    target = _shared_target(steps)
    _require_cover(target, steps)
    return compose(steps, OperatorKind.CYCLE).validate()


def mixture(steps: Sequence[ProjectorMatrix], weights) -> ProjectorMatrix:
    """Random scan: Σ w_d P_{F_d}"""
    target = _shared_target(steps)
    weights = weights if isinstance(weights, WeightVector) else WeightVector(tuple(weights))
    if weights.g != len(steps):
        raise SubsetError(f"{weights.g} weights for {len(steps)} steps")
    _require_cover(target, steps)
    matrix = sum(w * s.matrix for w, s in zip(weights.weights, steps))
    subsets = tuple(chain.from_iterable(s.subsets for s in steps))
    label = " + ".join(f"{w:.4g}*{s.describe()}" for w, s in zip(weights.weights, steps))
    return ProjectorMatrix(_freeze(matrix), target, OperatorKind.MIXTURE, subsets, label).validate()


def family_cycle(target, family: StepFamily, permutation: Permutation = None) -> ProjectorMatrix:
    steps = family.steps(target)
    if permutation is not None:
        steps = permutation.apply(steps)
    return cycle(steps)


def family_mixture(target, family: StepFamily, weights) -> ProjectorMatrix:
    return mixture(family.steps(target), weights)


def pi_adjoint(op: ProjectorMatrix) -> ProjectorMatrix:
    """D^{-1} Qᵀ D, the adjoint in L²(π)"""
    p = op.probs
    matrix = op.matrix.T * p[None, :] / p[:, None]
    subsets = tuple(reversed(op.subsets)) if op.kind in (OperatorKind.CYCLE, OperatorKind.GENERAL) else op.subsets
    return ProjectorMatrix(_freeze(matrix), op.target, op.kind, subsets, f"adj({op.describe()})")


def _as_array(T):
    return T.matrix if isinstance(T, ProjectorMatrix) else np.asarray(T, dtype=np.float64)


def _as_probs(probs):
    if isinstance(probs, (JointTarget, ProjectorMatrix)):
        return probs.probs
    return np.asarray(probs, dtype=np.float64)


def pi_norm(T, probs) -> float:
    """Operator norm on L²(π): largest singular value of D^{1/2} T D^{-1/2}"""
    matrix, p = _as_array(T), _as_probs(probs)
    if matrix.shape != (p.size, p.size):
        raise SubsetError(f"matrix shape {matrix.shape} does not match target dimension {p.size}")
    return float(linalg.norm(symmetrized(matrix, p), 2))


def commutator_norm(A: ProjectorMatrix, B: ProjectorMatrix, probs=None) -> float:
    """‖AB − BA‖_π; zero iff the two steps commute"""
    probs = A.probs if probs is None else probs
    return pi_norm(A.matrix @ B.matrix - B.matrix @ A.matrix, probs)


def self_adjointness_defect(op: ProjectorMatrix) -> float:
    """‖Q − Q*‖_π"""
    return pi_norm(op.matrix - pi_adjoint(op).matrix, op.probs)


def projector_identity_defects(op: ProjectorMatrix, n_max=5):
    """Residuals of ΠQ = Π = QΠ and (Q−Π)^n = Q^n − Π for n ≤ n_max"""
    Pi = pi_projector(op.target).matrix
    Q = op.matrix
    diff = Q - Pi
    power_defect = 0.0
    q_pow, d_pow = np.eye(op.dim), np.eye(op.dim)
    for _ in range(n_max):
        q_pow = q_pow @ Q
        d_pow = d_pow @ diff
        power_defect = max(power_defect, float(np.max(np.abs(d_pow - (q_pow - Pi)))))
    return {
        "pi_left": float(np.max(np.abs(Pi @ Q - Pi))),
        "pi_right": float(np.max(np.abs(Q @ Pi - Pi))),
        "powers": power_defect,
    }
