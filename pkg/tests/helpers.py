"""Shared sampling helpers for the test suite."""

import numpy as np

from riskquad.core import DiscreteRv


def random_rv(rng, max_atoms=8, span=3.0, offset=0.0):
    k = int(rng.integers(2, max_atoms + 1))
    vals = rng.uniform(-span, span, size=k) + offset
    probs = rng.dirichlet(np.ones(k))
    return DiscreteRv(vals, probs)


def random_rvs(rng, n, **kw):
    return [random_rv(rng, **kw) for _ in range(n)]


def interval_gap(a, b):
    return max(abs(a.lo - b.lo), abs(a.hi - b.hi))
