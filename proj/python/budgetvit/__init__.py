# Copyright (c) 2026, The budgetvit Authors
# SPDX-License-Identifier: Apache-2.0
"""Budget-constrained ViT training with a locality FFN and an image-size curriculum."""

from budgetvit._core import (
    ArgumentError,
    CheckpointError,
    ConfigError,
    DimensionError,
    ImageSizeSchedule,
    IngestionError,
    ShapeError,
    StateError,
    VitModel,
    cmd_bench,
    cmd_eval,
    cmd_schedule,
    cmd_train,
    cross_entropy_ls,
    depthwise_conv3x3,
    ffn_param_count,
    gelu,
    gradcheck,
    h_swish,
    im2seq,
    interpolate_embedding_rows,
    linear,
    patchify,
    read_metrics_csv,
    resolve_config,
    seq2im,
    softmax,
)

__all__ = [
    "ArgumentError",
    "CheckpointError",
    "ConfigError",
    "DimensionError",
    "ImageSizeSchedule",
    "IngestionError",
    "ShapeError",
    "StateError",
    "VitModel",
    "cmd_bench",
    "cmd_eval",
    "cmd_schedule",
    "cmd_train",
    "cross_entropy_ls",
    "depthwise_conv3x3",
    "ffn_param_count",
    "gelu",
    "gradcheck",
    "h_swish",
    "im2seq",
    "interpolate_embedding_rows",
    "linear",
    "patchify",
    "read_metrics_csv",
    "resolve_config",
    "seq2im",
    "softmax",
]
