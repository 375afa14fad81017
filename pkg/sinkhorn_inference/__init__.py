"""
Sinkhorn divergences between finitely supported measures, their Gaussian
limit laws and bootstrap tests built on them.
"""

__version__ = '0.1.0'

from .asymptotics import (AsymptoticLaw, asymptotic_law, directional_derivative,  # noqa: E402
                          limit_density, linearization_residual, multinomial_covariance,
                          rho, sample_limit)
from .errors import ConvergenceError, IngestError, InputError, SinkhornInferenceError  # noqa: E402
from .inference import (TestConfig, TestReport, bootstrap_pvalue, bootstrap_test_one,  # noqa: E402
                        bootstrap_test_two, kde, ks_distance, one_sample_statistic,
                        pairwise_pvalue_table, power_curve, reference_tests,
                        silverman_bandwidth, two_sample_statistic)
from .ingest import BinnedDataset, ingest_points  # noqa: E402
from .measures import (CostMatrix, DiscreteMeasure, EmpiricalMeasure, FiniteSpace,  # noqa: E402
                       bootstrap_resample, cost_from_matrix, euclidean_barycenter,
                       linear_trend_measure, make_grid, make_rect_grid, measure_from_counts,
                       pool_counts, power_cost, sample_empirical, squared_euclidean_cost,
                       uniform_measure, uniform_on_support)
from .sinkhorn import (SinkhornSolution, SolverConfig, eval_dual_objective,  # noqa: E402
                       export_plan_csv, kernel_matrix, sinkhorn_divergence, sinkhorn_loss,
                       sinkhorn_solve)
