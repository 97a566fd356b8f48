"""Solvers and analysis tools for discrete-time, undiscounted, nonnegative-
cost optimal control to a terminal set of states."""

from .model import (INF, OpiSeedError, Problem, ProblemValidationError,
                    SolverError, ValidationReport, as_cost, ext_abs_diff,
                    ext_add, inf_outside_values, membership_in_J, sup_diff,
                    validate, zero_values)
from .finite import (CycleReport, ReachabilityReport, evaluate_policy,
                     oracle_dijkstra, oracle_policy_enum,
                     positive_cycle_check, shortest_path_distances,
                     terminating_reachability)
from .vi import (FixedPoint, ScanResult, SolveTrace, TraceRow, ViResult,
                 bellman_operator, multiplicity_scan, residual, residual_map,
                 run_vi)
from .pi import (PiResult, check_opi_seed, improve_policy, policy_sweep,
                 run_opi, run_pi)
from .minimax import (TubeResult, guaranteed_predecessors, min_time_reachability,
                      minimax_bellman, target_tube, tube_zero_set)
from .grid import (GridProblem, GridSpec, LinearSystemSpec,
                   build_linear_problem, interpolate_value, riccati_oracle)
from .assumptions import AssumptionReport, CheckerConfig, check_assumption1
from . import fixtures

__version__ = "0.1.0"
