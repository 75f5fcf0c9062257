"""Finite product-space targets: joint tensors, marginals and conditionals.

Flat index convention: row-major over the coordinates with coordinate 1 the
slowest-varying one (``numpy.ravel_multi_index`` with C order). Every operator
in ``operator_algebra`` is indexed the same way.
"""
import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from config import Config
from services.errors import SubsetError, TargetError


@dataclass(frozen=True)
class ProductSpace:
    """K-fold product of finite alphabets"""
    component_sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.component_sizes)
        if len(sizes) < 2:
            raise TargetError(f"sizes: need at least 2 coordinates, got {len(sizes)}")
        if any(s < 2 for s in sizes):
            raise TargetError(f"sizes: every component size must be >= 2, got {list(sizes)}")
        object.__setattr__(self, "component_sizes", sizes)

    @property
    def K(self):
        return len(self.component_sizes)

    @property
    def dim(self):
        return int(np.prod(self.component_sizes))

    @property
    def shape(self):
        return self.component_sizes

    def flat_index(self, multi_index):
        """Flat position of a multi-index (0-based labels per coordinate)"""
        return int(np.ravel_multi_index(tuple(int(v) for v in multi_index), self.shape))

    def multi_index(self, flat):
        return tuple(int(v) for v in np.unravel_index(int(flat), self.shape))

    def states(self):
        """All states as a (dim, K) integer array in flat-index order"""
        grids = np.indices(self.shape).reshape(self.K, -1)
        return grids.T.copy()


@dataclass(frozen=True)
class CoordinateSubset:
    """Nonempty proper subset of {1,...,K}, stored 1-based and sorted"""
    indices: Tuple[int, ...]
    n_coordinates: int

    def __post_init__(self):
        raw = [int(i) for i in self.indices]
        if not raw:
            raise SubsetError("subset must be nonempty")
        if len(set(raw)) != len(raw):
            raise SubsetError(f"subset {raw} has duplicate coordinates")
        if any(i < 1 or i > self.n_coordinates for i in raw):
            raise SubsetError(f"subset {raw} outside 1..{self.n_coordinates}")
        if len(raw) == self.n_coordinates:
            raise SubsetError(f"subset {sorted(raw)} is not proper (covers all {self.n_coordinates} coordinates)")
        object.__setattr__(self, "indices", tuple(sorted(raw)))

    @classmethod
    def of(cls, indices: Iterable[int], n_coordinates: int):
        if isinstance(indices, CoordinateSubset):
            if indices.n_coordinates != n_coordinates:
                raise SubsetError(
                    f"subset {list(indices.indices)} built for K={indices.n_coordinates}, used with K={n_coordinates}"
                )
            return indices
        if isinstance(indices, (int, np.integer)):
            indices = [indices]
        return cls(tuple(indices), n_coordinates)

    @property
    def axes(self):
        """0-based tensor axes"""
        return tuple(i - 1 for i in self.indices)

    def complement(self):
        """1-based coordinates not in the subset (never empty)"""
        return tuple(i for i in range(1, self.n_coordinates + 1) if i not in self.indices)

    def __len__(self):
        return len(self.indices)

    def __str__(self):
        return "{" + ",".join(str(i) for i in self.indices) + "}"


@dataclass(frozen=True, eq=False)
class JointTarget:
    """Probability tensor over a ProductSpace, stored flat"""
    space: ProductSpace
    probs: np.ndarray = field(repr=False)
    strictly_positive: bool = False

    @property
    def dim(self):
        return self.space.dim

    @property
    def K(self):
        return self.space.K

    @property
    def tensor(self):
        return self.probs.reshape(self.space.shape)


@dataclass(frozen=True, eq=False)
class MarginalTarget:
    """π_I: the parent tensor summed over the coordinates outside I"""
    subset: CoordinateSubset
    probs: np.ndarray = field(repr=False)
    parent_dim: int
    component_sizes: Tuple[int, ...] = ()

    @property
    def strictly_positive(self):
        return bool(np.all(self.probs > 0))

    def as_joint(self):
        """View π_I as a JointTarget on its own product space (needs |I| >= 2)"""
        if len(self.subset) < 2:
            raise SubsetError(f"marginal over {self.subset} has a single coordinate; no product structure")
        space = ProductSpace(self.component_sizes)
        return _freeze_target(space, self.probs.copy())

    def local_subset(self, indices):
        """Translate parent coordinates inside I to 1-based positions within I"""
        positions = []
        for i in indices:
            if i not in self.subset.indices:
                raise SubsetError(f"coordinate {i} is not in {self.subset}")
            positions.append(self.subset.indices.index(i) + 1)
        return tuple(positions)


def _freeze_target(space, probs):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    probs.setflags(write=False)
    return JointTarget(space=space, probs=probs, strictly_positive=bool(np.all(probs > 0)))


def build_target(component_sizes: Sequence[int], weights: Sequence[float]) -> JointTarget:
    """Normalize nonnegative weights (flat-index order) into a JointTarget"""
    space = ProductSpace(tuple(component_sizes))
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size != space.dim:
        raise TargetError(f"weights: expected {space.dim} entries for sizes {list(space.shape)}, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise TargetError("weights: entries must be finite")
    if np.any(w < 0):
        raise TargetError(f"weights: negative entry at flat index {int(np.argmax(w < 0))}")
    total = w.sum()
    if total <= 0:
        raise TargetError("weights: all entries are zero")
    probs = w / total
    if abs(probs.sum() - 1.0) > Config.NORMALIZATION_TOL:
        raise TargetError(f"weights: normalization drifted to {probs.sum()!r}")
    target = _freeze_target(space, probs)
    logging.debug(f"Built target on sizes {list(space.shape)}, strictly_positive={target.strictly_positive}")
    return target


def marginalize(target: JointTarget, subset) -> MarginalTarget:
    """Sum out the coordinates not in the subset"""
    subset = CoordinateSubset.of(subset, target.K)
    drop = tuple(i - 1 for i in subset.complement())
    probs = target.tensor.sum(axis=drop).ravel()
    probs = np.ascontiguousarray(probs)
    probs.setflags(write=False)
    sizes = tuple(target.space.shape[a] for a in subset.axes)
    return MarginalTarget(subset=subset, probs=probs, parent_dim=target.dim, component_sizes=sizes)


def conditional(target: JointTarget, subset, x_minus_I: Sequence[int]) -> np.ndarray:
    """Distribution of X_I given X_{-I} = x_minus_I, flat over 𝒳_I

    ``x_minus_I`` lists labels for the complement coordinates in ascending order.
    """
    subset = CoordinateSubset.of(subset, target.K)
    rest = subset.complement()
    if len(x_minus_I) != len(rest):
        raise TargetError(f"conditioning value needs {len(rest)} labels for coordinates {list(rest)}")
    index = [slice(None)] * target.K
    for coord, label in zip(rest, x_minus_I):
        size = target.space.shape[coord - 1]
        if not 0 <= int(label) < size:
            raise TargetError(f"label {label} out of range for coordinate {coord} (size {size})")
        index[coord - 1] = int(label)
    block = target.tensor[tuple(index)]
    mass = block.sum()
    if mass <= 0:
        raise TargetError(f"conditioning slice x_-I={tuple(x_minus_I)} has zero mass; conditional undefined")
    return (block / mass).ravel()


def _normalize_partition(target, parts):
    K = target.K
    normalized = [tuple(sorted(int(i) for i in part)) for part in parts]
    flat = [i for part in normalized for i in part]
    if not normalized[0] or not normalized[1]:
        raise SubsetError("U and V must be nonempty")
    if sorted(flat) != list(range(1, K + 1)):
        raise SubsetError(f"{[list(p) for p in normalized]} is not a partition of 1..{K}")
    return normalized


def conditional_independence_gap(target: JointTarget, I_U, I_V, I_W=()) -> float:
    """Max over w of TV(π(u,v|w), π(u|w)⊗π(v|w)); zero iff U ⊥ V | W"""
    U, V, W = _normalize_partition(target, [I_U, I_V, I_W])
    shape = target.space.shape
    n_u = int(np.prod([shape[i - 1] for i in U]))
    n_v = int(np.prod([shape[i - 1] for i in V]))
    order = [i - 1 for i in U + V + W]
    table = np.transpose(target.tensor, order).reshape(n_u, n_v, -1)
    gap = 0.0
    for k in range(table.shape[2]):
        block = table[:, :, k]
        mass = block.sum()
        if mass <= 0:
            continue
        joint = block / mass
        product = np.outer(joint.sum(axis=1), joint.sum(axis=0))
        gap = max(gap, 0.5 * float(np.abs(joint - product).sum()))
    return gap


# Fixture constructors


def random_target(component_sizes, seed=None, rng: Optional[np.random.Generator] = None, low=0.1, high=1.0):
    """Strictly positive target with weights uniform on [low, high)"""
    rng = rng if rng is not None else np.random.default_rng(seed)
    dim = int(np.prod(component_sizes))
    return build_target(component_sizes, rng.uniform(low, high, size=dim))


def correlated_pair(rho):
    """[2,2] target with probs [(1+ρ)/4, (1−ρ)/4, (1−ρ)/4, (1+ρ)/4]"""
    if not -1 <= rho <= 1:
        raise TargetError(f"rho must lie in [-1, 1], got {rho}")
    return build_target([2, 2], [(1 + rho) / 4, (1 - rho) / 4, (1 - rho) / 4, (1 + rho) / 4])


def independent_product(marginals):
    """Product measure of the given 1-d marginals"""
    arrays = [np.asarray(m, dtype=np.float64) / np.sum(m) for m in marginals]
    tensor = reduce(np.multiply.outer, arrays)
    return build_target([a.size for a in arrays], tensor.ravel())


def markov_triple(p_w, u_given_w, v_given_w):
    """π(u,v,w) = π(w)π(u|w)π(v|w) on coordinates (u, v, w)

    ``u_given_w[w]`` and ``v_given_w[w]`` are conditional rows.
    """
    p_w = np.asarray(p_w, dtype=np.float64)
    u_given_w = np.asarray(u_given_w, dtype=np.float64)
    v_given_w = np.asarray(v_given_w, dtype=np.float64)
    tensor = np.einsum("w,wu,wv->uvw", p_w, u_given_w, v_given_w)
    return build_target(list(tensor.shape), tensor.ravel())


def random_markov_triple(sizes, seed=None, rng=None):
    """Random strictly positive target with coordinate 1 ⊥ coordinate 2 | coordinate 3"""
    rng = rng if rng is not None else np.random.default_rng(seed)
    n_u, n_v, n_w = sizes
    p_w = rng.uniform(0.1, 1.0, n_w)
    u_given_w = rng.uniform(0.1, 1.0, (n_w, n_u))
    v_given_w = rng.uniform(0.1, 1.0, (n_w, n_v))
    u_given_w /= u_given_w.sum(axis=1, keepdims=True)
    v_given_w /= v_given_w.sum(axis=1, keepdims=True)
    return markov_triple(p_w, u_given_w, v_given_w)
