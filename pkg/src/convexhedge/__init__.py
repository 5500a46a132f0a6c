"""Risk-minimizing partial hedges in finite incomplete market models.

Submodules:
    market      event trees, terminal measures, claims, file loading
    martingale  martingale measure polytope and superhedging prices
    risk        convex risk measures given by dual scenario data
    lp          in-house simplex and Kelley cutting-plane solvers
    static      budget-constrained static shortfall minimization
    nptest      generalized 0-1 test construction and verification
    saddle      primal-dual saddle certificates
    hedge       superhedging strategies on the tree
    oracle      independent slow verification paths
    cli         command line entry point
"""

from ._backend import BACKEND, COMPILED

__version__ = "0.1.0"
__all__ = ["BACKEND", "COMPILED", "__version__"]
