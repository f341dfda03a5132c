"""Finite approximate equivalence relations: axioms, stabilizer metric,
local statistics, VC sampling and finite-group convolution mixing."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    AxiomReport,
    AxiomViolation,
    FiniteGraph,
    GraphError,
    Measure,
    ball,
    check_axioms,
    check_measure_axiom,
    doubling_constant,
    graph_distance,
    read_edge_list,
    ruzsa_cover,
    weak_fubini,
)
from .stabilizer import StabilizerMetric, commensurability_report, theta_norm  # noqa: F401
