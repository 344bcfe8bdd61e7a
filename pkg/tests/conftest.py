"""Shared independent oracles for the test suite.

The helpers here deliberately avoid the package's kernels: they loop over
``itertools.product`` states in plain Python/numpy so a bug in the library's
enumeration or energy code cannot hide behind itself.
"""
import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp


def states(n):
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def brute_energy(J, h, x):
    n = len(x)
    e = 0.0
    for i in range(n):
        for j in range(n):
            e += J[i][j] * x[i] * x[j]
    return e + sum(h[i] * x[i] for i in range(n))


def brute_logz(J, h):
    X = states(len(h))
    return float(logsumexp([brute_energy(J, h, x) for x in X]))


def brute_mrf_logz(n, terms):
    X = states(n)
    E = [sum(w * math.prod(x[i] for i in key) for key, w in terms.items()) for x in X]
    return float(logsumexp(E))


def brute_inf_to_one(W):
    W = np.asarray(W, dtype=float)
    return max(float(np.abs(W @ np.array(s)).sum()) for s in itertools.product((-1.0, 1.0), repeat=W.shape[1]))


def random_couplings(rng, n, sigma=1.0):
    A = rng.normal(0.0, sigma, size=(n, n))
    J = (A + A.T) / 2.0
    np.fill_diagonal(J, 0.0)
    return J


def dobrushin_scaled(rng, n, eta):
    """Random symmetric couplings with every row of ``2|J|`` summing to at most ``1 - eta``."""
    J = random_couplings(rng, n)
    J *= (1.0 - eta) / (2.0 * np.abs(J).sum(axis=1).max())
    return J


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
