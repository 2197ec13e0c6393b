"""Structural-break detection and break-aware portfolio allocation."""
__version__ = "0.1.0"

from .changepoint import (BreakSet, DetectorConfig, ThresholdTable, batch_detect, build_thresholds,
                          detect_breaks, mw_normalized_stat, sequential_detect)
from .errors import CpoptError, DataError, InfeasibleError, NumericalError
from .ingest import PriceSeries, ReturnPanel, ReturnSeries, align, load_csv, log_returns
from .optimizer import (PortfolioSpec, RiskMatrix, WeightVector, allocate_cpo, allocate_mvo, covariance,
                        objective_value, optimize)
from .setdist import (AffinityMatrix, DistanceMatrix, DistanceMeasure, affinity_matrix, distance_matrix,
                      hausdorff_distance, mj_distance, wasserstein_distance)

__all__ = [
    "AffinityMatrix", "BreakSet", "CpoptError", "DataError", "DetectorConfig", "DistanceMatrix",
    "DistanceMeasure", "InfeasibleError", "NumericalError", "PortfolioSpec", "PriceSeries",
    "ReturnPanel", "ReturnSeries", "RiskMatrix", "ThresholdTable", "WeightVector", "affinity_matrix",
    "align", "allocate_cpo", "allocate_mvo", "batch_detect", "build_thresholds", "covariance",
    "detect_breaks", "distance_matrix", "hausdorff_distance", "load_csv", "log_returns",
    "mj_distance", "mw_normalized_stat", "objective_value", "optimize", "sequential_detect",
    "wasserstein_distance",
]
