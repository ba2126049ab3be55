from .backend import backend_name
from .modules import Conv2d, Linear, Module, Parameter
from .optim import Adam
from .tensor import Tensor, concat, conv2d, l1, mse, no_grad, softmax_over, stack

__all__ = [
    "Adam", "Conv2d", "Linear", "Module", "Parameter", "Tensor",
    "backend_name", "concat", "conv2d", "l1", "mse", "no_grad",
    "softmax_over", "stack",
]
