"""Robust (1+eps)-approximation scheme for k-means with emulated noisy distance oracles."""

from qkmeans.core import (
    Dataset,
    aspect_ratio,
    centroid,
    euclidean_distance,
    exact_cost,
    load_csv,
    normalize_dataset,
)
from qkmeans.errors import (
    BruteForceInfeasible,
    ConfigError,
    DegenerateDatasetError,
    ListSizeCapExceeded,
    QKMeansError,
    SamplerStarvation,
)
from qkmeans.oracle import DistanceEstimate, DistanceOracle, OracleConfig
from qkmeans.sampler import D2Distribution, WeightTree
from qkmeans.scheme import CandidateList, SchemeParams, brute_force_opt, solve

__all__ = [
    "BruteForceInfeasible",
    "CandidateList",
    "ConfigError",
    "D2Distribution",
    "Dataset",
    "DegenerateDatasetError",
    "DistanceEstimate",
    "DistanceOracle",
    "ListSizeCapExceeded",
    "OracleConfig",
    "QKMeansError",
    "SamplerStarvation",
    "SchemeParams",
    "WeightTree",
    "aspect_ratio",
    "brute_force_opt",
    "centroid",
    "euclidean_distance",
    "exact_cost",
    "load_csv",
    "normalize_dataset",
    "solve",
]
