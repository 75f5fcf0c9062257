"""Embedding Φ, collapsed Gibbs steps and two-component marginal chains.

Φ lifts a function f_I on 𝒳_I to f_I∘(projection onto x_I). Its inverse on
the range of Φ restricts to the slice x_{-I} = (0, ..., 0).
"""
import logging
from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, Optional

import numpy as np

from config import DEFAULT_TOLERANCES
from services.errors import PreconditionError, SubsetError
from services.operator_algebra import (
    Permutation, ProjectorMatrix, WeightVector, block_step, commutator_norm, cycle, gibbs_step, mixture,
    self_adjointness_defect,
)
from services.spectral_analysis import (
    SpectrumMatch, eigen_list, match_nonzero_spectra, operator_eigenvalues, sample_weights, spectral_report,
    full_gibbs_cycle,
)
from services.target_model import (
    CoordinateSubset, JointTarget, MarginalTarget, conditional_independence_gap, marginalize,
)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """0/1 lift matrix Φ (joint-dim × marginal-dim) and its slice restriction"""
    matrix: np.ndarray = field(repr=False)
    subset: CoordinateSubset
    slice_rows: np.ndarray = field(repr=False)
    marginal: MarginalTarget = field(repr=False)

    def lift(self, f_I):
        return self.matrix @ np.asarray(f_I)

    def restrict(self, f):
        """Φ⁻¹ on the range of Φ: read f on the x_{-I} = 0 slice"""
        return np.asarray(f)[self.slice_rows]

    @property
    def restriction_matrix(self):
        R = np.zeros(self.matrix.T.shape)
        R[np.arange(len(self.slice_rows)), self.slice_rows] = 1.0
        return R

    def isometry_defect(self, target: JointTarget):
        """max |ΦᵀDΦ − D_I|"""
        gram = self.matrix.T @ (target.probs[:, None] * self.matrix)
        return float(np.max(np.abs(gram - np.diag(self.marginal.probs))))


def build_embedding(target: JointTarget, subset) -> EmbeddingMatrix:
    subset = CoordinateSubset.of(subset, target.K)
    marginal = marginalize(target, subset)
    states = target.space.states()
    local = np.ravel_multi_index(tuple(states[:, a] for a in subset.axes), marginal.component_sizes)
    matrix = np.zeros((target.dim, marginal.probs.size))
    matrix[np.arange(target.dim), local] = 1.0
    rest_axes = [i - 1 for i in subset.complement()]
    on_slice = np.all(states[:, rest_axes] == 0, axis=1)
    slice_rows = np.flatnonzero(on_slice)
    # slice rows are in marginal flat order
    return EmbeddingMatrix(matrix, subset, slice_rows, marginal)


def _marginal_pi(marginal: MarginalTarget):
    return np.tile(marginal.probs, (marginal.probs.size, 1))


def _local_indices(marginal: MarginalTarget, J):
    J = tuple(sorted(set(int(j) for j in J)))
    if not J:
        raise SubsetError("collapsed step needs a nonempty J")
    return marginal.local_subset(J)


def collapsed_step(marginal: MarginalTarget, J) -> ProjectorMatrix:
    """Gibbs step on L²(π_I) resampling the coordinates J (parent labels, J ⊊ I)"""
    local = _local_indices(marginal, J)
    if len(local) == len(marginal.subset):
        raise SubsetError(f"J={list(J)} must be a proper subset of I={marginal.subset}")
    if not marginal.strictly_positive:
        raise PreconditionError(f"marginal over {marginal.subset} is not strictly positive")
    return gibbs_step(marginal.as_joint(), local)


def _marginal_step_matrix(marginal, J):
    if len(_local_indices(marginal, J)) == len(marginal.subset):
        return _marginal_pi(marginal)
    return collapsed_step(marginal, J).matrix


def _joint_step(target, subset: CoordinateSubset, J):
    """P_{F_J ∩ F}: resample J together with every coordinate outside I"""
    return block_step(target, tuple(J) + subset.complement())


@dataclass
class SimilarityResult:
    intertwining_defect: float
    restriction_defect: float
    holds: bool

    def __bool__(self):
        return self.holds

    def to_dict(self):
        return {
            "intertwining_defect": self.intertwining_defect,
            "restriction_defect": self.restriction_defect,
            "holds": self.holds,
        }


def similarity_check(target, subset, J, tolerances=DEFAULT_TOLERANCES) -> SimilarityResult:
    """P_{F_J∩F} Φ = Φ P_{F_J^(I)} and Φ⁻¹ P_{F_J∩F} Φ = P_{F_J^(I)}"""
    embedding = build_embedding(target, subset)
    joint = _joint_step(target, embedding.subset, J).matrix
    collapsed = _marginal_step_matrix(embedding.marginal, J)
    Phi = embedding.matrix
    intertwining = float(np.max(np.abs(joint @ Phi - Phi @ collapsed)))
    restriction = float(np.max(np.abs(embedding.restriction_matrix @ joint @ Phi - collapsed)))
    holds = max(intertwining, restriction) <= tolerances.algebra
    return SimilarityResult(intertwining, restriction, holds)


@dataclass
class CollapsedPair:
    joint_op: ProjectorMatrix = field(repr=False)
    marginal_op: ProjectorMatrix = field(repr=False)
    mode: str
    match: SpectrumMatch

    @property
    def passed(self):
        return self.match.matched

    def to_dict(self):
        return {
            "mode": self.mode,
            "joint_op": self.joint_op.describe(),
            "marginal_op": self.marginal_op.describe(),
            "spectra": self.match.to_dict(),
            "passed": self.passed,
        }


def _check_family_over(subset: CoordinateSubset, family):
    family = [tuple(sorted(set(int(j) for j in J))) for J in family]
    if len(family) < 1:
        raise PreconditionError("collapsed family is empty")
    for J in family:
        if not J or not set(J) < set(subset.indices):
            raise PreconditionError(f"J={list(J)} is not a nonempty proper subset of I={subset}")
    covered = set(j for J in family for j in J)
    if covered != set(subset.indices):
        raise PreconditionError(f"collapsed family {family} does not cover I={subset}")
    return family


def collapsed_spectral_check(target, subset, family, mode="cycle", weights=None,
                             tolerances=DEFAULT_TOLERANCES) -> CollapsedPair:
    """Nonzero spectra of the joint operator built from P_{F_d∩F} and of its collapsed counterpart"""
    if not target.strictly_positive:
        raise PreconditionError("collapsed checks need a strictly positive target")
    subset = CoordinateSubset.of(subset, target.K)
    family = _check_family_over(subset, family)
    marginal = marginalize(target, subset)
    joint_steps = [_joint_step(target, subset, J) for J in family]
    marginal_steps = [collapsed_step(marginal, J) for J in family]
    if mode == "cycle":
        joint_op, marginal_op = cycle(joint_steps), cycle(marginal_steps)
    elif mode == "mixture":
        weights = weights or WeightVector.uniform(len(family))
        joint_op, marginal_op = mixture(joint_steps, weights), mixture(marginal_steps, weights)
    else:
        raise PreconditionError(f"mode must be 'cycle' or 'mixture', got {mode!r}")
    joint_values = spectral_report(joint_op, tolerances).eigenvalues
    marginal_values = spectral_report(marginal_op, tolerances).eigenvalues
    match = match_nonzero_spectra(joint_values, marginal_values, tolerances,
                                  label=f"collapsed {mode} over I={subset}")
    return CollapsedPair(joint_op, marginal_op, mode, match)


@dataclass
class BlockedCollapsedReport:
    applicable: bool
    ci_gap: float
    commutator_norm: Optional[float] = None
    product_defect: Optional[float] = None
    u_side: Optional[SpectrumMatch] = None
    v_side: Optional[SpectrumMatch] = None

    @property
    def passed(self):
        if not self.applicable:
            return True
        return (self.u_side.matched and self.v_side.matched
                and self.product_defect <= DEFAULT_TOLERANCES.algebra)

    def to_dict(self):
        out = {"applicable": self.applicable, "ci_gap": self.ci_gap, "passed": self.passed}
        if self.applicable:
            out.update({
                "commutator_norm": self.commutator_norm,
                "product_defect": self.product_defect,
                "u_side": self.u_side.to_dict(),
                "v_side": self.v_side.to_dict(),
            })
        return out


def blocked_vs_collapsed_check(target, I_U, I_V, I_W, tolerances=DEFAULT_TOLERANCES) -> BlockedCollapsedReport:
    """Under U ⊥ V | W, blocked samplers share nonzero spectra with collapsed ones on (U,W) and (V,W)"""
    U, V, W = (tuple(sorted(int(i) for i in part)) for part in (I_U, I_V, I_W))
    ci_gap = conditional_independence_gap(target, U, V, W)
    if ci_gap >= tolerances.algebra:
        logging.info(f"Blocked-vs-collapsed check inapplicable: CI gap {ci_gap:.3e}")
        return BlockedCollapsedReport(applicable=False, ci_gap=ci_gap)
    if not W:
        raise PreconditionError("W must be nonempty for the collapsed comparison")
    P_U, P_V = gibbs_step(target, U), gibbs_step(target, V)
    commutator = commutator_norm(P_U, P_V)
    product_defect = float(np.max(np.abs(P_U.matrix @ P_V.matrix - block_step(target, U + V).matrix)))

    def side(first, other):
        joint = cycle([gibbs_step(target, first), gibbs_step(target, tuple(sorted(other + W)))])
        kept = tuple(sorted(first + W))
        marginal = marginalize(target, kept)
        collapsed = cycle([collapsed_step(marginal, first), collapsed_step(marginal, W)])
        return match_nonzero_spectra(
            spectral_report(joint, tolerances).eigenvalues,
            spectral_report(collapsed, tolerances).eigenvalues,
            tolerances, label=f"blocked {list(first)} vs collapsed on {list(kept)}",
        )

    return BlockedCollapsedReport(
        applicable=True,
        ci_gap=ci_gap,
        commutator_norm=commutator,
        product_defect=product_defect,
        u_side=side(U, V),
        v_side=side(V, U),
    )


@dataclass(frozen=True, eq=False)
class MarginalKernel:
    """Autonomous chain on one block of a two-component sampler"""
    matrix: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    component: str
    subset: tuple
    order: str

    def reversibility_defect(self):
        flow = self.probs[:, None] * self.matrix
        return float(np.max(np.abs(flow - flow.T)))

    def row_sum_defect(self):
        return float(np.max(np.abs(self.matrix.sum(axis=1) - 1.0)))

    def eigenvalues(self, tolerances=DEFAULT_TOLERANCES):
        """Spectrum of Q − Π on the marginal space"""
        diff = self.matrix - np.tile(self.probs, (self.probs.size, 1))
        return operator_eigenvalues(diff, self.probs, tolerances)


def _two_block_table(target, subset: CoordinateSubset):
    """π as an (|𝒳_Y|, |𝒳_Z|) table with Y = subset, Z = complement"""
    Z = subset.complement()
    order = list(subset.axes) + [i - 1 for i in Z]
    n_y = int(np.prod([target.space.shape[a] for a in subset.axes]))
    return np.transpose(target.tensor, order).reshape(n_y, -1)


def marginal_chain(target, split, order="YZ", tolerances=DEFAULT_TOLERANCES) -> MarginalKernel:
    """Q_Z (order YZ: z → y|z → z'|y) or Q_Y (order ZY: y → z|y → y'|z)"""
    subset = CoordinateSubset.of(split, target.K)
    table = _two_block_table(target, subset)
    p_y, p_z = table.sum(axis=1), table.sum(axis=0)
    if np.any(p_y <= 0) or np.any(p_z <= 0):
        raise PreconditionError("marginal chains need strictly positive block marginals")
    y_given_z = (table / p_z[None, :]).T
    z_given_y = table / p_y[:, None]
    if order == "YZ":
        kernel = MarginalKernel(y_given_z @ z_given_y, p_z, "Z", subset.complement(), order)
    elif order == "ZY":
        kernel = MarginalKernel(z_given_y @ y_given_z, p_y, "Y", subset.indices, order)
    else:
        raise PreconditionError(f"order must be 'YZ' or 'ZY', got {order!r}")
    if kernel.reversibility_defect() > tolerances.algebra or kernel.row_sum_defect() > tolerances.algebra:
        logging.error(f"Marginal chain Q_{kernel.component} fails reversibility or row sums")
    return kernel


@dataclass
class TwoComponentReport:
    matches: Dict[str, SpectrumMatch]
    max_imaginary: float
    self_adjoint_defect: float
    independence_gap: float
    reversibility_defects: Dict[str, float]
    spectra: Dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def criterion_consistent(self, tolerances=DEFAULT_TOLERANCES):
        """Two-component cycle self-adjoint exactly when Y and Z are independent"""
        return (self.self_adjoint_defect < tolerances.algebra) == (self.independence_gap < tolerances.algebra)

    @property
    def passed(self):
        tol = DEFAULT_TOLERANCES
        return (all(m.matched for m in self.matches.values())
                and self.max_imaginary <= tol.spectral
                and all(d <= tol.algebra for d in self.reversibility_defects.values())
                and self.criterion_consistent())

    def to_dict(self):
        return {
            "matches": {k: v.to_dict() for k, v in self.matches.items()},
            "max_imaginary": self.max_imaginary,
            "self_adjoint_defect": self.self_adjoint_defect,
            "independence_gap": self.independence_gap,
            "criterion_consistent": self.criterion_consistent(),
            "reversibility_defects": self.reversibility_defects,
            "spectra": {k: eigen_list(v) for k, v in self.spectra.items()},
            "passed": self.passed,
        }


def two_component_spectral_check(target, split, tolerances=DEFAULT_TOLERANCES) -> TwoComponentReport:
    """σ(P_Y P_Z − Π) = σ(P_Z P_Y − Π) = σ(Q_Y − Π_Y) = σ(Q_Z − Π_Z), all real"""
    subset = CoordinateSubset.of(split, target.K)
    P_Y, P_Z = gibbs_step(target, subset), gibbs_step(target, subset.complement())
    yz, zy = cycle([P_Y, P_Z]), cycle([P_Z, P_Y])
    Q_Z = marginal_chain(target, subset, "YZ", tolerances)
    Q_Y = marginal_chain(target, subset, "ZY", tolerances)
    spectra = {
        "cycle_YZ": spectral_report(yz, tolerances).eigenvalues,
        "cycle_ZY": spectral_report(zy, tolerances).eigenvalues,
        "Q_Y": Q_Y.eigenvalues(tolerances),
        "Q_Z": Q_Z.eigenvalues(tolerances),
    }
    reference = spectra["cycle_YZ"]
    matches = {
        name: match_nonzero_spectra(reference, values, tolerances, label=f"cycle_YZ vs {name}")
        for name, values in spectra.items() if name != "cycle_YZ"
    }
    imaginary = max(
        float(np.max(np.abs(
            values[np.abs(values) >= tolerances.zero_eigenvalue].imag), initial=0.0))
        for values in spectra.values()
    )
    return TwoComponentReport(
        matches=matches,
        max_imaginary=imaginary,
        self_adjoint_defect=self_adjointness_defect(yz),
        independence_gap=conditional_independence_gap(target, subset.indices, subset.complement(), ()),
        reversibility_defects={"Q_Y": Q_Y.reversibility_defect(), "Q_Z": Q_Z.reversibility_defect()},
        spectra=spectra,
    )


@dataclass
class CollapsedInheritanceReport:
    full_gap: float
    gaps: Dict[str, Dict[str, float]]
    passed: bool

    def to_dict(self):
        return {"full_gap": self.full_gap, "gaps": self.gaps, "passed": self.passed}


def collapsed_inheritance_check(target, subset, family, weight_samples=2, seed=0,
                                tolerances=DEFAULT_TOLERANCES) -> CollapsedInheritanceReport:
    """Every collapsed cycle and mixture has a gap, equal to that of its joint counterpart"""
    subset = CoordinateSubset.of(subset, target.K)
    family = _check_family_over(subset, family)
    full_gap = spectral_report(full_gibbs_cycle(target), tolerances).gap
    if full_gap <= tolerances.gap:
        raise PreconditionError(f"full Gibbs sampler has no spectral gap (gap={full_gap:.3e})")
    gaps = {}
    passed = True
    for order in permutations(range(1, len(family) + 1)):
        perm = Permutation(order)
        pair = collapsed_spectral_check(target, subset, perm.apply(family), "cycle", tolerances=tolerances)
        gaps[f"cycle {perm}"] = _pair_gaps(pair, tolerances)
        passed = passed and pair.passed
    if len(family) >= 2:
        for w in sample_weights(len(family), weight_samples, seed):
            pair = collapsed_spectral_check(target, subset, family, "mixture", w, tolerances)
            gaps[f"mixture {w}"] = _pair_gaps(pair, tolerances)
            passed = passed and pair.passed
    for entry in gaps.values():
        if entry["collapsed"] <= tolerances.gap or abs(entry["collapsed"] - entry["joint"]) > tolerances.spectral:
            passed = False
    return CollapsedInheritanceReport(full_gap, gaps, passed)


def _pair_gaps(pair: CollapsedPair, tolerances):
    return {
        "joint": spectral_report(pair.joint_op, tolerances).gap,
        "collapsed": spectral_report(pair.marginal_op, tolerances).gap,
    }
