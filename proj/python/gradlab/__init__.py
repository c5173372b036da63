"""Gradient leakage experiments: models, direct inversion, attacks and metrics."""

from ._gradlab import (
    Batch,
    Dataset,
    Model,
    Rng,
    __version__,
    avd,
    backward,
    forward,
    infer_labels,
    invert_dense,
    load_mnist,
    make_synthetic,
    normalized_avd,
    normalized_mse,
    run_attack,
    run_experiment,
    sample_batch,
)

__all__ = [
    "Batch",
    "Dataset",
    "Model",
    "Rng",
    "__version__",
    "avd",
    "backward",
    "forward",
    "infer_labels",
    "invert_dense",
    "load_mnist",
    "make_synthetic",
    "normalized_avd",
    "normalized_mse",
    "run_attack",
    "run_experiment",
    "sample_batch",
]
