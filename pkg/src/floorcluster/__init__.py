"""Floor estimation from RSS fingerprints with floorwise K-means cluster heads."""

__version__ = "0.1.0"

from .clustering import (
    CompactModel,
    TwoStageModel,
    classify_floor,
    floorwise_cluster,
    head_count,
    two_stage_build,
    two_stage_query,
)
from .core import FingerprintDatabase, FingerprintRecord, FloorSpec, Observation, densify, sq_euclidean
from .kmeans import KmeansConfig, KmeansResult, kmeans
from .nn import NnEstimate, nn_estimate
from .wcl import ApPositionTable, estimate_ap_positions, rss_weight, snap_to_floor, wcl_estimate

__all__ = [
    "ApPositionTable",
    "CompactModel",
    "FingerprintDatabase",
    "FingerprintRecord",
    "FloorSpec",
    "KmeansConfig",
    "KmeansResult",
    "NnEstimate",
    "Observation",
    "TwoStageModel",
    "classify_floor",
    "densify",
    "estimate_ap_positions",
    "floorwise_cluster",
    "head_count",
    "kmeans",
    "nn_estimate",
    "rss_weight",
    "snap_to_floor",
    "sq_euclidean",
    "two_stage_build",
    "two_stage_query",
    "wcl_estimate",
]
