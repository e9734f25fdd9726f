"""Score-based discovery of latent causal structure in linear-Gaussian models."""
from .graph import (Cpdag, LatentDag, NodeId, L, X, atomic_covers, cpdag, d_separated,
                    is_atomic_cover, markov_equivalent, mec_key, op_atomic, op_min,
                    op_skeleton, pure_children, satisfies_hierarchical,
                    satisfies_one_factor, skeleton, v_structures)
from .sem import (SemParameters, implied_covariance, normalize_omega_l,
                  orthogonal_transform, random_parameters, reduce_shared_cover, sample)
from .scoring import (Dataset, FitOptions, FitResult, GenerationTestConfig, Score, bic,
                      fit_ml, nll, nll_gradient, saturated_nll, score_dim)
from .dimension import (DofReport, dof_hierarchical, dof_numeric, dof_one_factor,
                        dof_upper_bound)
from .enumeration import EnumerationConfig, enumerate_hierarchical, enumerate_one_factor
from .search import ContinuousOptions, SearchConfig, SearchReport, exact_search
from .continuous import continuous_search
from .evaluation import BenchmarkConfig, builtin_ground_truths, f1_skeleton, run_benchmark, shd_mec

__version__ = "0.1.0"
