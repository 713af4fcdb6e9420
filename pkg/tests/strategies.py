"""Hypothesis strategies: seeds drive numpy generators so samples stay cheap."""
import numpy as np
from hypothesis import strategies as st

from seaqt.opspace import random_density, random_hermitian

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=2, max_value=8)


@st.composite
def hermitian(draw, dim=None):
    n = draw(dims) if dim is None else dim
    return random_hermitian(np.random.default_rng(draw(seeds)), n)


@st.composite
def density(draw, dim=None, full_rank=True, min_eig=1e-3):
    n = draw(dims) if dim is None else dim
    rng = np.random.default_rng(draw(seeds))
    if full_rank:
        return random_density(rng, n, min_eig=min_eig)
    return random_density(rng, n, rank=draw(st.integers(1, n - 1)))


@st.composite
def system(draw, max_dim=8, full_rank=True):
    """(rho, H) of equal random dimension."""
    n = draw(st.integers(2, max_dim))
    rng = np.random.default_rng(draw(seeds))
    rho = random_density(rng, n, min_eig=1e-3) if full_rank else random_density(rng, n, rank=max(1, n - 1))
    return rho, random_hermitian(rng, n)
