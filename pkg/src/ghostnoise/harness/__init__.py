"""Desk-scale MLP training harness."""

from .data import Dataset, load_idx, make_blobs, split_dataset
from .experiment import Metrics, SweepResult, TrainConfig, run_experiment, sweep
from .model import InjectorSpec, Mlp, MlpSpec
from .optim import cosine_lr, sgd_step

__all__ = [
    "Dataset", "load_idx", "make_blobs", "split_dataset",
    "Metrics", "SweepResult", "TrainConfig", "run_experiment", "sweep",
    "InjectorSpec", "Mlp", "MlpSpec",
    "cosine_lr", "sgd_step",
]
