import logging
from dataclasses import dataclass, field
from itertools import permutations
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg, sparse
from scipy.sparse.csgraph import connected_components

from config import Config, DEFAULT_TOLERANCES
from services.errors import EigenSolverError, PreconditionError
from services.operator_algebra import (
    OperatorKind, Permutation, ProjectorMatrix, StepFamily, WeightVector, block_step, compose,
    cycle, mixture, pi_adjoint, pi_norm, pi_projector, self_adjointness_defect, symmetrized,
)


def operator_eigenvalues(matrix, probs, tolerances=DEFAULT_TOLERANCES):
    """Eigenvalues of a matrix on L²(π), via the similarity D^{1/2} M D^{-1/2}

    Uses the symmetric solver when the similarity is symmetric (π-self-adjoint
    operators) and the general complex solver otherwise.
    """
    S = symmetrized(np.asarray(matrix, dtype=np.float64), np.asarray(probs, dtype=np.float64))
    try:
        if np.max(np.abs(S - S.T)) <= tolerances.algebra:
            values = linalg.eigvalsh(0.5 * (S + S.T)).astype(np.complex128)
        else:
            values = linalg.eigvals(S)
    except (linalg.LinAlgError, ValueError) as e:
        logging.error(f"Eigensolver failed on a {S.shape[0]}x{S.shape[0]} operator: {str(e)}")
        raise EigenSolverError(f"eigensolver failed: {str(e)}") from e
    if not np.all(np.isfinite(values)):
        raise EigenSolverError("eigensolver returned non-finite eigenvalues")
    return _canonical_order(values)


def _canonical_order(values):
    keys = np.lexsort((np.round(values.imag, 8), np.round(values.real, 8)))
    return values[keys]


@dataclass
class SpectrumMatch:
    """Comparison of two nonzero spectra"""
    matched: bool
    comparison: str
    max_deviation: float
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "matched": self.matched,
            "comparison": self.comparison,
            "max_deviation": self.max_deviation,
            "left": eigen_list(self.left),
            "right": eigen_list(self.right),
        }


def eigen_list(values):
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=np.complex128)]


def nonzero_part(values, zero_tol):
    values = np.asarray(values, dtype=np.complex128)
    return _canonical_order(values[np.abs(values) >= zero_tol])


def _greedy_deviation(left, right):
    unused = list(range(len(right)))
    worst = 0.0
    for value in left:
        distances = [abs(value - right[j]) for j in unused]
        k = int(np.argmin(distances))
        worst = max(worst, float(distances[k]))
        unused.pop(k)
    return worst


def _one_sided(left, right):
    if len(left) == 0:
        return 0.0
    if len(right) == 0:
        return float("inf")
    return float(max(np.min(np.abs(right - v)) for v in left))


def match_nonzero_spectra(first, second, tolerances=DEFAULT_TOLERANCES, label=""):
    """Compare eigenvalues of modulus >= the zero cutoff as multisets

    Falls back to a set comparison (logged) when the multiplicities differ but
    every eigenvalue on each side has a partner on the other.
    """
    left = nonzero_part(first, tolerances.zero_eigenvalue)
    right = nonzero_part(second, tolerances.zero_eigenvalue)
    if len(left) == len(right):
        deviation = float(np.max(np.abs(left - right))) if len(left) else 0.0
        if deviation > tolerances.spectral:
            deviation = _greedy_deviation(left, right)
        if deviation <= tolerances.spectral:
            return SpectrumMatch(True, "multiset", deviation, left, right)
    deviation = max(_one_sided(left, right), _one_sided(right, left))
    if deviation <= tolerances.spectral:
        logging.warning(
            f"Nonzero spectra {label} agree only as sets ({len(left)} vs {len(right)} eigenvalues); downgraded comparison"
        )
        return SpectrumMatch(True, "set", deviation, left, right)
    logging.error(f"Nonzero spectra {label} differ (max deviation {deviation:.3e})")
    return SpectrumMatch(False, "mismatch", deviation, left, right)


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray = field(repr=False)
    spectral_radius: float
    gap: float
    pi_operator_norm: float
    is_self_adjoint: bool
    label: str = ""

    @property
    def has_gap(self):
        return self.gap > DEFAULT_TOLERANCES.gap

    def violations(self, tolerances=DEFAULT_TOLERANCES):
        """Names of SpectralReport invariants that fail"""
        failed = []
        if self.spectral_radius > self.pi_operator_norm + tolerances.spectral:
            failed.append("radius_exceeds_norm")
        if self.is_self_adjoint and abs(self.spectral_radius - self.pi_operator_norm) > tolerances.spectral:
            failed.append("self_adjoint_radius_norm")
        if self.is_self_adjoint and np.max(np.abs(self.eigenvalues.imag), initial=0.0) > tolerances.spectral:
            failed.append("self_adjoint_real_spectrum")
        if np.min(np.abs(self.eigenvalues)) > tolerances.zero_eigenvalue:
            failed.append("missing_zero_eigenvalue")
        return failed

    def to_dict(self):
        return {
            "label": self.label,
            "eigenvalues": eigen_list(self.eigenvalues),
            "spectral_radius": self.spectral_radius,
            "gap": self.gap,
            "pi_operator_norm": self.pi_operator_norm,
            "is_self_adjoint": self.is_self_adjoint,
            "violations": self.violations(),
        }


def spectral_report(op: ProjectorMatrix, tolerances=DEFAULT_TOLERANCES) -> SpectralReport:
    """Spectrum, radius, gap and π-norm of Q − Π"""
    diff = op.matrix - pi_projector(op.target).matrix
    values = operator_eigenvalues(diff, op.probs, tolerances)
    radius = float(np.max(np.abs(values)))
    report = SpectralReport(
        eigenvalues=values,
        spectral_radius=radius,
        gap=1.0 - radius,
        pi_operator_norm=pi_norm(diff, op.probs),
        is_self_adjoint=self_adjointness_defect(op) <= tolerances.algebra,
        label=op.describe(),
    )
    logging.debug(f"{report.label}: r={radius:.6g}, gap={report.gap:.6g}, norm={report.pi_operator_norm:.6g}")
    return report


def gap_of(op: ProjectorMatrix, tolerances=DEFAULT_TOLERANCES) -> float:
    return spectral_report(op, tolerances).gap


def power_norm_rate(op: ProjectorMatrix, n_max: int) -> List[float]:
    """‖Qⁿ − Π‖_π for n = 1..n_max, computed as powers of Q − Π"""
    if n_max < 1:
        raise PreconditionError(f"n_max must be >= 1, got {n_max}")
    diff = op.matrix - pi_projector(op.target).matrix
    power = np.eye(op.dim)
    norms = []
    for _ in range(n_max):
        power = power @ diff
        norms.append(pi_norm(power, op.probs))
    return norms


def power_rate_estimate(op: ProjectorMatrix, n: int = Config.POWER_RATE_STEPS) -> float:
    """‖Qⁿ − Π‖_π^{1/n}"""
    return float(power_norm_rate(op, n)[-1] ** (1.0 / n))


def sample_weights(g, weight_samples, seed) -> List[WeightVector]:
    """Uniform vector followed by seeded symmetric Dirichlet(1) draws"""
    rng = np.random.default_rng(seed)
    draws = rng.dirichlet(np.ones(g), size=weight_samples)
    vectors = [WeightVector.uniform(g)]
    for row in draws:
        row = np.maximum(row, 1e-300)
        vectors.append(WeightVector(tuple(row / row.sum())))
    return vectors


def _check_enumerable(family):
    if family.g > Config.MAX_ENUMERATED_STEPS:
        raise PreconditionError(
            f"family has g={family.g} steps; at most {Config.MAX_ENUMERATED_STEPS} can be enumerated over all orderings"
        )


@dataclass
class LemmaRow:
    """One cycle ordering's three equivalent gap criteria"""
    ordering: Permutation
    one_not_in_spectrum: bool
    cycle_norm_below_one: bool
    mixture_norm_below_one: bool
    cycle_norm: float

    @property
    def agrees(self):
        return self.one_not_in_spectrum == self.cycle_norm_below_one == self.mixture_norm_below_one


@dataclass
class SolidarityVerdict:
    family: StepFamily
    all_have_gap: bool
    per_ordering_gaps: Dict[Permutation, float]
    per_weight_gaps: Dict[WeightVector, float]
    consistent: bool
    lemma_rows: List[LemmaRow] = field(default_factory=list)
    uniform_mixture_norm: float = float("nan")
    adjoint_conjugate: bool = True
    seed: Optional[int] = None

    @property
    def lemma_consistent(self):
        return all(row.agrees for row in self.lemma_rows)

    @property
    def passed(self):
        return self.consistent and self.lemma_consistent and self.adjoint_conjugate

    def to_dict(self):
        return {
            "family": str(self.family),
            "seed": self.seed,
            "all_have_gap": self.all_have_gap,
            "consistent": self.consistent,
            "lemma_consistent": self.lemma_consistent,
            "adjoint_conjugate": self.adjoint_conjugate,
            "uniform_mixture_norm": self.uniform_mixture_norm,
            "per_ordering_gaps": {str(k): v for k, v in self.per_ordering_gaps.items()},
            "per_weight_gaps": {str(k): v for k, v in self.per_weight_gaps.items()},
            "lemma": [
                {
                    "ordering": str(row.ordering),
                    "one_not_in_spectrum": row.one_not_in_spectrum,
                    "cycle_norm": row.cycle_norm,
                    "cycle_norm_below_one": row.cycle_norm_below_one,
                    "mixture_norm_below_one": row.mixture_norm_below_one,
                }
                for row in self.lemma_rows
            ],
            "passed": self.passed,
        }

    def to_frame(self):
        """One row per tested operator: kind, ordering or weights, gap"""
        rows = [{"family": str(self.family), "kind": "cycle", "key": str(k), "gap": v}
                for k, v in self.per_ordering_gaps.items()]
        rows += [{"family": str(self.family), "kind": "mixture", "key": str(k), "gap": v}
                 for k, v in self.per_weight_gaps.items()]
        return pd.DataFrame(rows, columns=["family", "kind", "key", "gap"])


def _evaluate(jobs, max_workers):
    """Run zero-argument callables, returning results in submission order"""
    n_jobs = max(1, min(max_workers, len(jobs)))
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(job)() for job in jobs)


def solidarity_suite(target, family, weight_samples=Config.DEFAULT_WEIGHT_SAMPLES, seed=Config.DEFAULT_SEED,
                     tolerances=DEFAULT_TOLERANCES, max_workers=Config.MAX_WORKERS) -> SolidarityVerdict:
    """Gap-positivity agreement across every cycle ordering and sampled mixtures"""
    family = StepFamily.of(family, target.K)
    _check_enumerable(family)
    if weight_samples < 1:
        raise PreconditionError(f"weight_samples must be >= 1, got {weight_samples}")
    steps = family.steps(target)
    orderings = [Permutation(order) for order in permutations(range(1, family.g + 1))]
    weights = sample_weights(family.g, weight_samples, seed)

    def cycle_job(perm):
        def run():
            op = cycle(perm.apply(steps))
            return op, spectral_report(op, tolerances)
        return run

    def mixture_job(w):
        return lambda: spectral_report(mixture(steps, w), tolerances)

    cycle_results = _evaluate([cycle_job(p) for p in orderings], max_workers)
    mixture_reports = _evaluate([mixture_job(w) for w in weights], max_workers)

    per_ordering = {p: rep.gap for p, (_, rep) in zip(orderings, cycle_results)}
    per_weight = {w: rep.gap for w, rep in zip(weights, mixture_reports)}
    per_ordering = dict(sorted(per_ordering.items(), key=lambda item: item[0].order))
    per_weight = dict(sorted(per_weight.items(), key=lambda item: item[0].key()))

    positivity = [gap > tolerances.gap for gap in list(per_ordering.values()) + list(per_weight.values())]
    consistent = all(positivity) or not any(positivity)

    uniform_norm = mixture_reports[0].pi_operator_norm
    lemma_rows = []
    adjoint_ok = True
    by_order = {p.order: result for p, result in zip(orderings, cycle_results)}
    for perm, (op, rep) in zip(orderings, cycle_results):
        lemma_rows.append(LemmaRow(
            ordering=perm,
            one_not_in_spectrum=bool(np.min(np.abs(rep.eigenvalues - 1.0)) > tolerances.spectral),
            cycle_norm_below_one=rep.pi_operator_norm < 1.0 - tolerances.spectral,
            mixture_norm_below_one=uniform_norm < 1.0 - tolerances.spectral,
            cycle_norm=rep.pi_operator_norm,
        ))
        reverse_op, reverse_rep = by_order[perm.reversed().order]
        if np.max(np.abs(pi_adjoint(op).matrix - reverse_op.matrix)) > tolerances.algebra:
            adjoint_ok = False
        match = match_nonzero_spectra(np.conj(rep.eigenvalues), reverse_rep.eigenvalues, tolerances,
                                      label=f"adjoint of ordering {perm}")
        adjoint_ok = adjoint_ok and match.matched

    verdict = SolidarityVerdict(
        family=family,
        all_have_gap=all(positivity),
        per_ordering_gaps=per_ordering,
        per_weight_gaps=per_weight,
        consistent=consistent,
        lemma_rows=lemma_rows,
        uniform_mixture_norm=uniform_norm,
        adjoint_conjugate=adjoint_ok,
        seed=seed,
    )
    logging.info(
        f"Solidarity on family {family}: {len(orderings)} orderings, {len(weights)} mixtures, "
        f"consistent={verdict.consistent}, lemma={verdict.lemma_consistent}"
    )
    return verdict


@dataclass
class InheritanceReport:
    family: StepFamily
    full_gap: float
    cycle_gaps: Dict[str, float]
    mixture_gaps: Dict[str, float]
    passed: bool

    def to_dict(self):
        return {
            "family": str(self.family),
            "full_gap": self.full_gap,
            "cycle_gaps": self.cycle_gaps,
            "mixture_gaps": self.mixture_gaps,
            "passed": self.passed,
        }


def full_gibbs_cycle(target) -> ProjectorMatrix:
    """P_{E1}...P_{EK}"""
    return cycle(StepFamily.full(target.K).steps(target))


def inheritance_check(target, family, weight_samples=Config.DEFAULT_WEIGHT_SAMPLES, seed=Config.DEFAULT_SEED,
                      tolerances=DEFAULT_TOLERANCES) -> InheritanceReport:
    """If the full Gibbs sampler has a gap, so does every cycle and mixture of the family"""
    family = StepFamily.of(family, target.K)
    _check_enumerable(family)
    full_gap = gap_of(full_gibbs_cycle(target), tolerances)
    if full_gap <= tolerances.gap:
        raise PreconditionError(f"full Gibbs sampler has no spectral gap (gap={full_gap:.3e})")
    steps = family.steps(target)
    cycle_gaps = {}
    for order in permutations(range(1, family.g + 1)):
        perm = Permutation(order)
        cycle_gaps[str(perm)] = gap_of(cycle(perm.apply(steps)), tolerances)
    mixture_gaps = {str(w): gap_of(mixture(steps, w), tolerances)
                    for w in sample_weights(family.g, weight_samples, seed)}
    passed = all(g > tolerances.gap for g in list(cycle_gaps.values()) + list(mixture_gaps.values()))
    if not passed:
        logging.error(f"Inheritance failed for family {family}: a gap is not positive")
    return InheritanceReport(family, full_gap, cycle_gaps, mixture_gaps, passed)


@dataclass
class InequalityResult:
    lhs: float
    rhs: float
    holds: bool

    def __bool__(self):
        return self.holds

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


def norm_contraction_check(subsets: Sequence[Sequence[int]], T, target,
                           tolerances=DEFAULT_TOLERANCES) -> InequalityResult:
    """‖P_M T‖_π ≤ ‖P_{M1}...P_{MN} T‖_π with P_M the step on the union of the subsets"""
    subsets = [tuple(s.indices) if hasattr(s, "indices") else tuple(s) for s in subsets]
    matrix = T.matrix if isinstance(T, ProjectorMatrix) else np.asarray(T, dtype=np.float64)
    union = sorted(set(i for s in subsets for i in s))
    P_M = block_step(target, union).matrix
    product = compose([block_step(target, s) for s in subsets]).matrix
    lhs = pi_norm(P_M @ matrix, target.probs)
    rhs = pi_norm(product @ matrix, target.probs)
    return InequalityResult(lhs, rhs, lhs <= rhs + tolerances.norm_slack)


def mixture_ordering_check(target, family, blocked_family, weights,
                           tolerances=DEFAULT_TOLERANCES) -> InequalityResult:
    """r(Σ w_d P_{F_d} − Π) ≤ r(Σ w_d P_{F'_d} − Π) when each blocked I_d contains I'_d"""
    family = StepFamily.of(family, target.K)
    blocked_family = StepFamily.of(blocked_family, target.K)
    if family.g != blocked_family.g:
        raise PreconditionError(f"families have {family.g} and {blocked_family.g} steps; weights must match")
    for d, (small, big) in enumerate(zip(family.subsets, blocked_family.subsets), start=1):
        if not set(small.indices) <= set(big.indices):
            raise PreconditionError(f"blocked step {d} {big} does not contain {small}")
    blocked = spectral_report(mixture(blocked_family.steps(target), weights), tolerances).spectral_radius
    unblocked = spectral_report(mixture(family.steps(target), weights), tolerances).spectral_radius
    return InequalityResult(blocked, unblocked, blocked <= unblocked + tolerances.norm_slack)


@dataclass
class AperiodicityResult:
    irreducible: bool
    aperiodic: Optional[bool]
    unit_circle_eigenvalues: List[complex]

    def __bool__(self):
        return bool(self.aperiodic)

    def to_dict(self):
        return {
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "unit_circle_eigenvalues": eigen_list(self.unit_circle_eigenvalues),
        }


def is_irreducible(matrix) -> bool:
    graph = sparse.csr_matrix(np.asarray(matrix) > 0)
    n_components, _ = connected_components(graph, directed=True, connection="strong")
    return n_components == 1


def aperiodicity_check(op, tolerances=DEFAULT_TOLERANCES) -> AperiodicityResult:
    """No eigenvalue of modulus near 1 other than a simple eigenvalue at 1"""
    matrix = op.matrix if isinstance(op, ProjectorMatrix) else np.asarray(op, dtype=np.float64)
    if not is_irreducible(matrix):
        logging.warning("Aperiodicity check skipped: operator is reducible")
        return AperiodicityResult(False, None, [])
    try:
        values = linalg.eigvals(matrix)
    except linalg.LinAlgError as e:
        raise EigenSolverError(f"eigensolver failed: {str(e)}") from e
    on_circle = values[np.abs(values) >= 1.0 - tolerances.spectral]
    aperiodic = len(on_circle) == 1 and abs(on_circle[0] - 1.0) <= tolerances.spectral
    return AperiodicityResult(True, bool(aperiodic), list(on_circle))


@dataclass
class RestrictionResult:
    radius_full: float
    radius_restricted: float
    spectra: SpectrumMatch

    @property
    def passed(self):
        return self.spectra.matched and abs(self.radius_full - self.radius_restricted) <= DEFAULT_TOLERANCES.spectral

    def to_dict(self):
        return {
            "radius_full": self.radius_full,
            "radius_restricted": self.radius_restricted,
            "spectra": self.spectra.to_dict(),
            "passed": self.passed,
        }


def complement_restriction_check(op: ProjectorMatrix, tolerances=DEFAULT_TOLERANCES) -> RestrictionResult:
    """r(Q − Π) equals the spectral radius of Q restricted to the complement of the constants"""
    root = np.sqrt(op.probs)
    basis = linalg.null_space(root[None, :])
    restricted = basis.T @ symmetrized(op.matrix, op.probs) @ basis
    if op.kind in (OperatorKind.GIBBS_STEP, OperatorKind.MIXTURE, OperatorKind.PI_PROJECTOR):
        inner = linalg.eigvalsh(0.5 * (restricted + restricted.T)).astype(np.complex128)
    else:
        inner = linalg.eigvals(restricted)
    full = spectral_report(op, tolerances)
    radius_restricted = float(np.max(np.abs(inner))) if inner.size else 0.0
    match = match_nonzero_spectra(full.eigenvalues, inner, tolerances, label=f"restriction of {op.describe()}")
    return RestrictionResult(full.spectral_radius, radius_restricted, match)
