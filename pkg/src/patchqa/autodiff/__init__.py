from .nn import BatchNorm, LayerNorm, Linear, Module
from .optim import SGD, OptimizerState, cosine_lr, sgd_step
from .tensor import (
    BatchNormState,
    Tensor,
    add,
    attention,
    batch_norm,
    concat,
    cross_entropy,
    gather,
    layer_norm,
    leaky_relu,
    linear,
    matmul,
    max_reduce,
    maximum,
    mean,
    mse_loss,
    mul,
    reshape,
    softmax,
    stack,
    tensor_sum,
    transpose,
)

__all__ = [
    "BatchNorm", "BatchNormState", "LayerNorm", "Linear", "Module", "OptimizerState", "SGD",
    "Tensor", "add", "attention", "batch_norm", "concat", "cosine_lr", "cross_entropy", "gather",
    "layer_norm", "leaky_relu", "linear", "matmul", "max_reduce", "maximum", "mean",
    "mse_loss", "mul", "reshape", "sgd_step", "softmax", "stack", "tensor_sum", "transpose",
]
