"""Broadcast age of information in slotted CSMA/CA networks.

Analytic side: :mod:`baoi.model_core` (transmission/collision fixed point)
and :mod:`baoi.queue_analysis` (update queue and average broadcast age).
Empirical side: :mod:`baoi.simulator`.  :mod:`baoi.cli` wraps both.
"""

from .model_core import (
    EquivalentModel,
    InfeasibleRegime,
    ModelError,
    NetworkParams,
    NoConvergence,
    avg_collision_prob,
    neighbor_pmf,
    p_cl_given_neighbors,
    p_tx_of_collision,
    service_pmf,
    solve_fixed_point,
)
from .queue_analysis import (
    QueueSolution,
    Unstable,
    average_baoi,
    baoi_from_mu,
    max_stable_density,
    pgf_X,
    pgf_Y,
    solve_alpha,
)

__all__ = [
    "EquivalentModel",
    "InfeasibleRegime",
    "ModelError",
    "NetworkParams",
    "NoConvergence",
    "avg_collision_prob",
    "neighbor_pmf",
    "p_cl_given_neighbors",
    "p_tx_of_collision",
    "service_pmf",
    "solve_fixed_point",
    "QueueSolution",
    "Unstable",
    "average_baoi",
    "baoi_from_mu",
    "max_stable_density",
    "pgf_X",
    "pgf_Y",
    "solve_alpha",
]

__version__ = "0.1.0"
