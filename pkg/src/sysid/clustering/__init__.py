"""Representative-point selection and local bandwidth estimation."""

from .dpmm import DpmmModel, dpmm_assign, dpmm_fit
from .iforest import IsolationForest, edge_filter
from .kmeans import KMeansResult, kmeans

__all__ = [
    "DpmmModel",
    "IsolationForest",
    "KMeansResult",
    "dpmm_assign",
    "dpmm_fit",
    "edge_filter",
    "kmeans",
]
