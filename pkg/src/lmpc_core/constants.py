"""Numerical defaults shared by the library and the runner."""

# Constraint checks
CONSTRAINT_MARGIN = 1e-8  # absolute slack accepted on F x + G u <= f
STATE_MATCH_TOLERANCE = 1e-9  # infinity norm used for Q lookups and safe-set dedup
COST_RELATIVE_TOLERANCE = 1e-9  # cost resummation checks
PROPERTY_TOLERANCE = 1e-6  # theorem-level inequalities (accumulated solver slack)

# QP solver (osqp)
QP_EPS_ABS = 1e-9
QP_EPS_REL = 1e-9
QP_MAX_ITER = 200_000
QP_INACCURATE_FEASIBILITY = 1e-6  # accept "solved inaccurate" only below this residual

# Periodic Riccati recursion
RICCATI_TOLERANCE = 1e-9
RICCATI_MAX_PERIODS = 500

# Robust positive invariant outer approximation
RPI_ALPHA_TARGET = 0.05
RPI_MAX_HORIZON = 200
RPI_REGULARIZATION = 1e-6  # relative size of the generators added to degenerate sets
RPI_FLATNESS = 1e-3  # sigma_min / sigma_max below which the eigenbasis test set is used
RPI_BASIS_CONDITION = 1e8  # eigenbases worse than this fall back to the direct test

# Membership test slack for invariance checks
INVARIANCE_SLACK = 1e-8

# Scenario loading
FEASIBILITY_LP_BOUND = 1.0  # cap on the Chebyshev slack maximized by the non-emptiness LP
