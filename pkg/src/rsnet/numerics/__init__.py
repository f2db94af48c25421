from .checkpoint import FormatError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, grad_check, grad_check_detail
from .nn import (
    ConfigError,
    Encoder,
    EncoderBlock,
    LayerNorm,
    Linear,
    MLP,
    Module,
    MultiHeadAttention,
    block_diagonal_mask,
    multihead_attention,
)
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    concat,
    layer_norm,
    log_softmax,
    matmul,
    relu,
    sigmoid,
    softmax,
    take_rows,
)

__all__ = [
    "FormatError",
    "load_checkpoint",
    "save_checkpoint",
    "GradCheckResult",
    "grad_check",
    "grad_check_detail",
    "ConfigError",
    "Encoder",
    "EncoderBlock",
    "LayerNorm",
    "Linear",
    "MLP",
    "Module",
    "MultiHeadAttention",
    "block_diagonal_mask",
    "multihead_attention",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "concat",
    "layer_norm",
    "log_softmax",
    "matmul",
    "relu",
    "sigmoid",
    "softmax",
    "take_rows",
]
