"""Few-shot classification via ODE-integrated prototype flows.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from protoflow._core import (
    Dataset,
    Model,
    ProtoflowError,
    __version__,
    dataset_from_arrays,
    gradient_bias,
    load_dataset,
    prototype_bias,
    split_dataset,
    synth_dataset,
    train,
)

__all__ = [
    "Dataset",
    "Model",
    "ProtoflowError",
    "__version__",
    "dataset_from_arrays",
    "gradient_bias",
    "load_dataset",
    "prototype_bias",
    "split_dataset",
    "synth_dataset",
    "train",
]
