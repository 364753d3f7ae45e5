"""Python access to the vitas stereo pipeline."""

from ._vitas import (
    CheckpointError,
    ConfigError,
    Model,
    PfmError,
    UserError,
    compute_metrics,
    decode_pfm,
    default_config,
    dense_attention,
    encode_pfm,
    evaluate,
    flop_count,
    gen_rds,
    local_patch_attention,
    read_pfm,
    train,
    write_pfm,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Model",
    "PfmError",
    "UserError",
    "compute_metrics",
    "decode_pfm",
    "default_config",
    "dense_attention",
    "encode_pfm",
    "evaluate",
    "flop_count",
    "gen_rds",
    "local_patch_attention",
    "read_pfm",
    "train",
    "write_pfm",
]
