"""Optimizers operating on a Sequential's flat parameter/gradient vectors."""

import numpy as np


class Sgd:
    def __init__(self, net, lr):
        self.net, self.lr = net, lr

    def step(self):
        self.net._params -= self.lr * self.net._grads


class Adam:
    def __init__(self, net, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.net, self.lr = net, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(net.num_params)
        self.v = np.zeros(net.num_params)
        self.t = 0

    def step(self):
        g = self.net._grads
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        self.net._params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name, net, lr, **kwargs):
    if name == "sgd":
        return Sgd(net, lr)
    if name == "adam":
        return Adam(net, lr, **kwargs)
    raise ValueError(f"unknown optimizer {name!r}")
