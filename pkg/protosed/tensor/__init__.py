from protosed.tensor.ops import (
    RunningStats,
    avg_pool2d,
    batchnorm,
    conv1d,
    conv2d,
    cross_entropy,
    fully_connected,
    global_avg_pool,
    leaky_relu,
    sigmoid,
)
from protosed.tensor.optim import Adam
from protosed.tensor.params import ParamStore
from protosed.tensor.tensor import Tensor, as_tensor, no_grad

__all__ = [
    "Adam",
    "ParamStore",
    "RunningStats",
    "Tensor",
    "as_tensor",
    "avg_pool2d",
    "batchnorm",
    "conv1d",
    "conv2d",
    "cross_entropy",
    "fully_connected",
    "global_avg_pool",
    "leaky_relu",
    "no_grad",
    "sigmoid",
]
