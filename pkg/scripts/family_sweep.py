"""Sweep the radius of a divergence ball and watch the worst-case expectation
walk from the plain mean to the essential supremum.

Usage: python scripts/family_sweep.py [kl|tv|pearson]
"""

import sys

import numpy as np

from riskquad.core import DiscreteRv, ess_bounds, expectation
from riskquad.divergence import StochasticDivergenceJ, family_eval_envelope, make_divergence


def main():
    name = sys.argv[1] if len(sys.argv) > 1 else "kl"
    rng = np.random.default_rng(0)
    x = DiscreteRv(rng.normal(0.0, 1.0, 7), rng.dirichlet(np.ones(7)))
    j = StochasticDivergenceJ.from_phi(make_divergence(name), normalized=True)
    print(f"phi = {name}")
    print(f"mean     = {expectation(x): .6f}")
    print(f"ess sup  = {ess_bounds(x)[1]: .6f}")
    print(f"{'tau':>12s} {'worst-case E':>14s}")
    for tau in np.geomspace(1e-6, 1e6, 13):
        val, _ = family_eval_envelope(j, float(tau), x)
        print(f"{tau:12.3g} {val:14.8f}")


if __name__ == "__main__":
    main()
