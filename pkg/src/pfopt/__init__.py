"""Projection-free convex optimization toolkit.

Conditional-gradient and accelerated-gradient solvers over norm-ball
constraints, with closed-form linear minimization oracles, surrogate
model diagnostics, and reproducible experiment traces.
"""

from .core import (DimensionMismatch, FactoredMatrix, PowerIterationResult,
                   SingularPair, SparseMatrix, ZeroOperator, combine,
                   diff_norm_sq, gnorm, inner, lincomb, power_iteration,
                   rng_from_seed, top_singular_pair)
from .objectives import (LogisticProblem, MatCompProblem, Objective,
                         diagonal_quadratic_objective, logistic_objective,
                         matcomp_initial_point, matcomp_objective,
                         quadratic_objective)
from .feasible_sets import (FeasibleSet, ZeroDirection, l1_ball, l2_ball,
                            lmo_l1, lmo_l2, lmo_lp, lmo_nuclear, lp_ball,
                            nuclear_ball, project_l1, project_l2)
from .solvers import (InfeasibleIterate, InfeasibleStart, MissingProjection,
                      MissingStrongConvexity, Schedule, SolverState,
                      SolverTrace, StoppingRule, afw_shifted, custom_schedule,
                      fw_classic, run_afw, run_agm, run_agm_sc, run_fw,
                      run_projected_gd)
from .diagnostics import (EmptyWindow, IncompleteTrace, RateReport,
                          SurrogateState, agm_momentum_equivalence,
                          default_rate_window, dual_gap_weights, estimate_rate,
                          fw_gap, surrogate_step, weighted_dual_gap,
                          zigzag_dispersion)
from .data_io import (LabeledDataset, MalformedLine, NonBinaryLabels,
                      RatingsDataset, SchemaMismatch, parse_libsvm,
                      parse_movielens, read_trace, write_trace)

__version__ = "0.1.0"
