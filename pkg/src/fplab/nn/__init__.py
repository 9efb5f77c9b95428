from .layers import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Dense,
    Flatten,
    LeakyReLU,
    ReLU,
    Sequential,
    Sigmoid,
    Tanh,
)
from .losses import softmax_cross_entropy
from .optim import Adam, Sgd, make_optimizer

__all__ = [
    "Adam",
    "BatchNorm2d",
    "Conv2d",
    "ConvTranspose2d",
    "Dense",
    "Flatten",
    "LeakyReLU",
    "ReLU",
    "Sequential",
    "Sgd",
    "Sigmoid",
    "Tanh",
    "make_optimizer",
    "softmax_cross_entropy",
]
