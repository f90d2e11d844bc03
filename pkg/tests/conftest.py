"""Shared problem builders for the test suite."""

import numpy as np
import pytest

from unmatched import problems
from unmatched.operators import UnmatchedPair


def make_small_pair_arrays(decade_exponent, perturbation, seed, n=64):
    """Square ill-posed matrix plus mismatched transpose, as arrays."""
    spec = problems.IllPosedMatrixSpec(
        m=n, n=n, singular_values=np.logspace(0, decade_exponent, n), seed=seed)
    a = problems.make_ill_posed_matrix(spec)
    b = problems.make_unmatched_transpose(a, perturbation, seed=seed + 1000)
    return a, b


def planted_operator(n, rng, leftmost=-1.0, gap=0.5, fill=0.3):
    """Real nonsymmetric matrix with a known, separated leftmost eigenvalue.

    Built as Q^T T Q with T block upper triangular: the (1,1) entry is the
    planted leftmost eigenvalue, the remaining diagonal blocks are random
    eigenvalues with real part at least ``leftmost + gap``, and the strict
    upper triangle adds nonnormality.
    """
    t = np.zeros((n, n))
    t[0, 0] = leftmost
    i = 1
    while i < n:
        if i + 1 < n and rng.random() < 0.5:
            re = rng.uniform(leftmost + gap, 2.0)
            im = rng.uniform(0.1, 1.0)
            t[i:i + 2, i:i + 2] = [[re, im], [-im, re]]
            i += 2
        else:
            t[i, i] = rng.uniform(leftmost + gap, 2.0)
            i += 1
    t += np.triu(fill * rng.standard_normal((n, n)), 1)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q.T @ t @ q


def random_shaped_pair(shape_kind, rank_kind, rng):
    """Random (forward, back) arrays across shape and rank regimes."""
    m, n = {"square": (12, 12), "tall": (18, 11), "wide": (9, 15)}[shape_kind]
    if rank_kind == "adef":
        ra = int(rng.integers(2, min(m, n)))
        a = rng.standard_normal((m, ra)) @ rng.standard_normal((ra, n))
    else:
        a = rng.standard_normal((m, n))
    if rank_kind == "bdef":
        rb = int(rng.integers(1, min(m, n)))
        b = rng.standard_normal((n, rb)) @ rng.standard_normal((rb, m))
    else:
        b = rng.standard_normal((n, m))
    return a, b


@pytest.fixture(scope="session")
def well_pair_arrays():
    """Fast-converging well-conditioned pair (all eigenvalues well right of 0)."""
    return make_small_pair_arrays(-1.0, 0.05, seed=0)


@pytest.fixture(scope="session")
def ill_pair_arrays():
    """Pair whose composed operator has clearly negative leftmost real part."""
    a, b = make_small_pair_arrays(-3.0, 0.3, seed=0)
    assert np.linalg.eigvals(b @ a).real.min() < 0
    return a, b


@pytest.fixture(scope="session")
def paper_style_ill_arrays():
    """Severely ill-conditioned pair with slightly negative leftmost part."""
    return make_small_pair_arrays(-4.0, 0.05, seed=0)


@pytest.fixture(scope="session")
def ct_pair_factory():
    geom = problems.CtGeometry()

    def factory():
        return problems.make_ct_pair(geom)

    return factory


def fresh_pair(a, b) -> UnmatchedPair:
    return UnmatchedPair.from_arrays(a, b)
