"""Numerical toolkit for 1-D ergodic Bellman equations with positive quadratic
gradient nonlinearity: critical values, solution profiles, classification of
the induced diffusion, the linear-quadratic closed form, and the variational
representation of the critical value."""

__version__ = "0.1.0"

from .coefficients import CoefficientModel1D, bump, constant, eval_coeff, polynomial, zero
from .problem import (AssumptionReport, NonElliptic, ProblemSpec,
                      UnknownProblem, builtin, catalog_names,
                      validate_assumptions)
from .grid import BadGrid, Field, Grid, d1, d2, field_from, make_grid, resample
from .dirichlet import (GridSolution, NoConvergence, gradient_bound_sweep,
                        residual, solve_dirichlet)
from .lambdastar import (BadBracket, LambdaStarResult, NotConverged,
                         PerronViolation, kappa_of, lambda_star,
                         lambda_star_bisect, principal_eigenvalue)
from .classify import (Classification, DriftField, Inconclusive,
                       InsufficientMass, NonPositiveTest, SimulationReport,
                       classify_solution, decay_rate, drift_of, linear_drift,
                       rate_functional_lower, scale_classify, simulate_em)
from .leqg import (ComplexRoots, LeqgSolution, NoStabilizing,
                   SingularLinearSolve, assemble, riccati_roots_1d,
                   riccati_stabilizing_nd)
from .variational import (DualityReport, EmptyFamily, Measure1D, NotErgodic,
                          G_functional, J_lower, default_test_family,
                          duality_check, gaussian_measure, invariant_density,
                          measure_from_density, perturbation_sweep)
