"""Adversarial domain adaptation with center-based alignment.

Thin Python surface over the C++ core: synthetic domain-shift generators,
IDX ingestion, the alternating adversarial trainer, evaluation and
checkpoint IO.
"""

from ._core import (
    CenterTable,
    ConfigError,
    DomainDataset,
    ModelParams,
    ShiftSpec,
    TrainConfig,
    TrainResult,
    UdaError,
    evaluate,
    export_embeddings,
    filter_target,
    gen_blobs,
    gen_two_moons,
    gradient_check,
    load_checkpoint,
    load_idx,
    normalize,
    resume,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "CenterTable",
    "ConfigError",
    "DomainDataset",
    "ModelParams",
    "ShiftSpec",
    "TrainConfig",
    "TrainResult",
    "UdaError",
    "evaluate",
    "export_embeddings",
    "filter_target",
    "gen_blobs",
    "gen_two_moons",
    "gradient_check",
    "load_checkpoint",
    "load_idx",
    "normalize",
    "resume",
    "save_checkpoint",
    "train",
    "__version__",
]
