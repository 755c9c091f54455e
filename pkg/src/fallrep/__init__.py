"""Physics-regularized contrastive representations for fall-motion windows."""

__version__ = "0.1.0"

from .data_model import (
    ContactDescriptor,
    Dataset,
    DatasetError,
    PhysicsLabel,
    TrajectoryRecord,
    WindowRecord,
    load_dataset,
    write_dataset,
)
from .labeling import LabelingConfig, label_dataset
from .losses import LossConfig, composite_loss
from .relations import build_relations, stratified_batches
from .training import Checkpoint, TrainConfig, train

__all__ = [
    "Checkpoint", "ContactDescriptor", "Dataset", "DatasetError", "LabelingConfig", "LossConfig",
    "PhysicsLabel", "TrainConfig", "TrajectoryRecord", "WindowRecord", "build_relations",
    "composite_loss", "label_dataset", "load_dataset", "stratified_batches", "train", "write_dataset",
]
