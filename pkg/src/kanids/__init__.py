"""KAN and classic deep-learning baselines for intrusion detection benchmarks.

Everything is built on float64 numpy arrays with explicit, hand-written
backward passes so that every gradient can be verified against central
finite differences.
"""

from kanids.splines import SplineGrid, BasisEval, make_grid, eval_basis

__version__ = "0.1.0"

__all__ = [
    "SplineGrid",
    "BasisEval",
    "make_grid",
    "eval_basis",
    "__version__",
]
