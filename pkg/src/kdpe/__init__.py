"""Manifold-aware density estimation and best-of-N selection for robot actions.

A generative policy proposes N candidate end-effector trajectories per
observation; this package scores each candidate by kernel density over the
population, on the product manifold of position, rotation, and gripper
aperture, and picks one. Highest density keeps the policy on its data
manifold; lowest density seeks novelty; a Markov factorization scores whole
trajectories instead of single steps.
"""

from .density import (DensityReport, Method, kde_log_density, logsumexp,
                      score_population, select, select_tr,
                      tr_kde_log_density, tr_score_population)
from .errors import (DegenerateRotation, EmptySupport, FormatError,
                     InvalidSpec, IoFailure, KdpeError, StepOutOfRange,
                     ValidationError)
from .heatmap import HeatmapRequest, evaluate_heatmap
from .kernel import (DEFAULT_BANDWIDTHS, Action, Bandwidths, Delta, delta,
                     kernel, log_kernel, log_kernel_matrix)
from .population import (MixtureMode, MixtureSpec, Population, Trajectory,
                         fig1_population, generate, population_from_bytes,
                         population_from_json, population_from_json_dict,
                         population_to_bytes, population_to_json,
                         population_to_json_dict, quantize_f32,
                         read_population, write_population)
from .server import (FacadeServer, SelectionClient, SelectionRequestFrame,
                     SelectionServer, encode_frame, parse_frame)

__version__ = "0.1.0"

__all__ = [
    "Action", "Bandwidths", "DEFAULT_BANDWIDTHS", "Delta", "DensityReport",
    "DegenerateRotation", "EmptySupport", "FacadeServer", "FormatError",
    "HeatmapRequest", "InvalidSpec", "IoFailure", "KdpeError", "Method",
    "MixtureMode", "MixtureSpec", "Population", "SelectionClient",
    "SelectionRequestFrame", "SelectionServer", "StepOutOfRange",
    "Trajectory", "ValidationError", "delta", "encode_frame",
    "evaluate_heatmap", "fig1_population", "generate", "kde_log_density",
    "kernel", "log_kernel", "log_kernel_matrix", "logsumexp", "parse_frame",
    "population_from_bytes", "population_from_json",
    "population_from_json_dict", "population_to_bytes", "population_to_json",
    "population_to_json_dict", "quantize_f32", "read_population",
    "score_population", "select", "select_tr", "tr_kde_log_density",
    "tr_score_population", "write_population",
]
