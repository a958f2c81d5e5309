"""Dyadic cubes, sparse decompositions and Haar shift operators on finite metric spaces."""

__version__ = "0.1.0"

from .metric_core import (Measure, NestedNets, PointCloud, build_nested_nets,
                          estimate_doubling_constant, greedy_maximal_separated, line_grid,
                          random_cloud, torus_grid)
from .dyadic_cubes import DyadicSystem, build_dyadic_system, canonical_torus_system, verify_axioms
from .adjacent_systems import AdjacentFamily, build_adjacent_family, find_host
from .sparse_decomposition import (TauMap, build_sparse_decomposition, compute_T,
                                   verify_decomposition)
from .haar_analysis import (HaarSystem, NormedSpaceE, build_haar_system,
                            conditional_expectation, expand, reconstruct)
from .stochastic_norms import SignEnsemble, bochner_norm, randomized_norm
from .shift_operator import (ExperimentConfig, ShiftOperator, apply_shift, canonical_tau_1d,
                             norm_growth_experiment)
