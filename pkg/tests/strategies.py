import numpy as np
from hypothesis import strategies as st

from services.operator_algebra import WeightVector
from services.target_model import build_target, independent_product


@st.composite
def targets(draw, min_k=2, max_k=3, max_size=3):
    """Strictly positive targets with small component sizes"""
    sizes = draw(st.lists(st.integers(2, max_size), min_size=min_k, max_size=max_k))
    dim = int(np.prod(sizes))
    weights = draw(st.lists(st.floats(0.05, 1.0), min_size=dim, max_size=dim))
    return build_target(sizes, weights)


@st.composite
def product_targets(draw, min_k=2, max_k=3, max_size=3):
    sizes = draw(st.lists(st.integers(2, max_size), min_size=min_k, max_size=max_k))
    marginals = [draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)) for n in sizes]
    return independent_product(marginals)


@st.composite
def mixture_weights(draw, g):
    raw = np.asarray(draw(st.lists(st.floats(0.05, 1.0), min_size=g, max_size=g)))
    return WeightVector(tuple(raw / raw.sum()))
