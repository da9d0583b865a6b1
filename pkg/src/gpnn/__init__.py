"""Node classification on heterophilic graphs via pointer-ranked non-local
aggregation, with a self-contained reverse-mode autodiff engine and an
experiment harness."""

from ._accel import available_backends, backend_name
from .config import ModelConfig
from .graphs import (
    Graph,
    NormalizedAdjacency,
    SplitSet,
    generate_splits,
    homophily_ratio,
    load_dataset,
    load_splits,
    normalize_adjacency,
    save_dataset,
    save_splits,
)
from .sampling import NodeSequenceBatch, hop_of, sample_sequences

__version__ = "0.1.0"

__all__ = [
    "Graph", "NormalizedAdjacency", "SplitSet", "ModelConfig",
    "NodeSequenceBatch", "available_backends", "backend_name",
    "generate_splits", "homophily_ratio", "hop_of", "load_dataset",
    "load_splits", "normalize_adjacency", "sample_sequences",
    "save_dataset", "save_splits",
]
