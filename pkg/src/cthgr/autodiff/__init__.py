from .functional import (
    conv3d,
    cross_entropy,
    dropout,
    gelu,
    layer_norm,
    linear,
    log_softmax,
    maxpool3d,
    relu,
    softmax,
)
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, AdamState, adam_step, learning_rate
from .tensor import (
    Tensor,
    add,
    as_tensor,
    broadcast_to,
    concat,
    exp,
    getitem,
    log,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    scale,
    set_debug,
    swapaxes,
    transpose,
    tsum,
)

__all__ = [
    "Adam",
    "AdamState",
    "GradCheckReport",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "broadcast_to",
    "concat",
    "conv3d",
    "cross_entropy",
    "dropout",
    "exp",
    "gelu",
    "getitem",
    "grad_check",
    "layer_norm",
    "learning_rate",
    "linear",
    "log",
    "log_softmax",
    "matmul",
    "maxpool3d",
    "mean",
    "mul",
    "neg",
    "relu",
    "reshape",
    "scale",
    "set_debug",
    "softmax",
    "swapaxes",
    "transpose",
    "tsum",
]
