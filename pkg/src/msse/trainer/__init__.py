"""Optimisation, data splitting, the training loop and checkpoints."""

from .checkpoint import load_checkpoint, read_checkpoint, restore, save_checkpoint
from .loop import SampleSet, TrainConfig, TrainLog, fit
from .optim import Adam, adam_step
from .split import stratified_split

__all__ = [
    "Adam", "SampleSet", "TrainConfig", "TrainLog", "adam_step", "fit", "load_checkpoint",
    "read_checkpoint", "restore", "save_checkpoint", "stratified_split",
]
