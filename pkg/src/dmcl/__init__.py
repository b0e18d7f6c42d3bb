"""Distributed momentum-based concurrent learning (DMCL) with scheduled restarts.

A network of agents estimates a common parameter vector from recorded data
using a momentum flow with periodic restarts, simulated as a hybrid system.

Subpackages
-----------
graphs        Laplacians, Perron vectors and the spectral restart certificate.
dataset       Regressors, recorded data and disturbances.
hybrid        Fixed-step hybrid-system integrator with guard bisection.
core          DMCL flow/jump maps, centralized and decentralized restarts.
certificates  Numerical Lyapunov and ISS verification.
applications  Adaptive control and feedback optimisation closed loops.
experiments   YAML configurations and preset studies.
cli           ``dmcl`` command-line entry point.
"""

from dmcl.core import DMCLParams, DMCLProblem, NetworkState, simulate
from dmcl.dataset import DataRichnessError
from dmcl.graphs import Digraph, GraphError, SpectralCertificate, certify

__version__ = "0.1.0"

__all__ = [
    "DMCLParams", "DMCLProblem", "DataRichnessError", "Digraph", "GraphError", "NetworkState",
    "SpectralCertificate", "certify", "simulate", "__version__",
]
