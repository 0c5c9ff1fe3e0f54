"""Recovery thresholds for weighted l1 minimization under non-uniform sparsity priors.

The package computes Grassmann-angle exponents of the weighted
cross-polytope, turns them into a certified sparsity bound, and checks
that bound against Monte Carlo recovery experiments.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
