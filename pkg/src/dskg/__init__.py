"""Sequential knowledge-graph completion with a type-switched stacked LSTM."""

__version__ = "0.1.0"

from .data import (
    IndexedDataset,
    RawTriple,
    Vocabulary,
    augment_reverse,
    batch_iterator,
    build_vocabulary,
    index_dataset,
    parse_triples,
)
from .evaluation import EnhanceConfig, MetricsReport, enhance_scores, filtered_rank
from .model import ModelParams, forward_triple, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, train

__all__ = [
    "EnhanceConfig",
    "IndexedDataset",
    "MetricsReport",
    "ModelParams",
    "RawTriple",
    "TrainConfig",
    "Vocabulary",
    "augment_reverse",
    "batch_iterator",
    "build_vocabulary",
    "enhance_scores",
    "filtered_rank",
    "forward_triple",
    "index_dataset",
    "init_params",
    "load_checkpoint",
    "parse_triples",
    "save_checkpoint",
    "train",
]
