"""Dense-tensor autodiff, transformer blocks, and the Adam optimizer."""

from .adam import DEFAULT_LR, AdamState, adam_step, init_adam_state
from .gradcheck import finite_difference_check
from .tensor import Tensor, as_tensor, concat, matmul, no_grad, take_rows
from .transformer import (
    LAYER_NORM_EPS,
    TransformerBlockParams,
    attention_weights,
    init_block_params,
    layer_norm,
    multi_head_attention,
    transformer_block,
    trunc_normal,
)

__all__ = [
    "DEFAULT_LR",
    "AdamState",
    "LAYER_NORM_EPS",
    "Tensor",
    "TransformerBlockParams",
    "adam_step",
    "as_tensor",
    "attention_weights",
    "concat",
    "finite_difference_check",
    "init_adam_state",
    "init_block_params",
    "layer_norm",
    "matmul",
    "multi_head_attention",
    "no_grad",
    "take_rows",
    "transformer_block",
    "trunc_normal",
]
