"""Distributed optimization over directed graphs: IPD, Push-DIGing and exact-step ADMM."""

from .balancing import balance_residual, balance_step, conserved_quantity, mixing_matrix
from .errors import (CertificateInfeasibleError, DegenerateStartError, DivergenceError, InnerSolveError,
                     InvalidInputError, InvalidStateError, InvalidTopologyError, IPDError, ParseError,
                     NumericDegeneracyError, WeightTooLargeError, ZeroOutDegreeError)
from .graph import (DirectedGraph, GraphFacts, analyze, build_P, diameter, initial_weight_bound,
                    is_strongly_connected, read_edge_list, ring_with_random_chords,
                    second_eigenvalue_modulus, write_edge_list)
from .ipd import (ActivationSchedule, AgentState, IPDState, Reference, RunConfig, averaging_round,
                  draw_activation, dual_step, local_x_step, reference_solution, run_ipd)
from .metrics import (CostErrorMeter, RateCertificate, Trace, TraceRecord, consensus_residual,
                      cost_ledger_update, derive_parameters, fit_geometric_rate, relative_cost_error,
                      theorem_inequalities)
from .objectives import (Dataset, LogisticObjective, QuadraticObjective, agent_logistic_objectives,
                         logistic_objective, parse_libsvm, partition_uniform, quadratic_objective,
                         solve_centralized, sum_objectives, write_libsvm)

__version__ = "0.1.0"
