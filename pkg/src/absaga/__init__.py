"""AB-SAGA: decentralized variance-reduced stochastic optimization over directed graphs."""

from .algorithms import (
    IterationMetrics,
    NetworkState,
    ab_step,
    absaga_init,
    absaga_step,
    init_state,
    metrics,
    run,
    saga_centralized_step,
    saga_init,
    sab_step,
)
from .digraph import DirectedGraph, complete_graph, exponential_graph, geometric_digraph, ring_graph
from .problems import FiniteSumProblem, ProblemConstants, load_csv, synthetic_logistic
from .theory import ConvergenceCertificate, ConvergenceInputs, delta_certificate, max_stepsize, min_comm_rounds
from .weights import StochasticMatrix, WeightSystem

__version__ = "0.1.0"
