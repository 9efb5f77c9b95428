"""Minimal layer stack with hand-written backprop over float64 numpy tensors.

Every network is a Sequential whose trainable parameters live in one flat
contiguous vector (layers hold reshaped views into it, in construction order).
That flat vector is the unit of exchange between clients and server. BatchNorm
running statistics live in a separate flat buffer vector; ``state_vector``
concatenates both so a network can be checkpointed and restored exactly.
"""

import numpy as np

from .. import kernels


class Layer:
    def param_shapes(self):
        return []

    def buffer_shapes(self):
        return []

    def bind(self, params, grads, buffers):
        pass

    def init_params(self, rng):
        pass

    def forward(self, x, train):
        raise NotImplementedError

    def backward(self, gy, need_input=True):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, n_in, n_out, init_std=None):
        self.n_in, self.n_out, self.init_std = n_in, n_out, init_std

    def param_shapes(self):
        return [(self.n_in, self.n_out), (self.n_out,)]

    def bind(self, params, grads, buffers):
        self.w, self.b = params
        self.gw, self.gb = grads

    def init_params(self, rng):
        std = self.init_std if self.init_std is not None else np.sqrt(2.0 / self.n_in)
        self.w[...] = rng.normal(0.0, std, self.w.shape)
        self.b[...] = 0.0

    def forward(self, x, train):
        self._x = x
        return x @ self.w + self.b

    def backward(self, gy, need_input=True):
        self.gw += self._x.T @ gy
        self.gb += gy.sum(axis=0)
        return gy @ self.w.T if need_input else None


class Conv2d(Layer):
    def __init__(self, c_in, c_out, k, stride=1, pad=0, init_std=None):
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.pad, self.init_std = stride, pad, init_std

    def param_shapes(self):
        return [(self.c_out, self.c_in, self.k, self.k), (self.c_out,)]

    def bind(self, params, grads, buffers):
        self.w, self.b = params
        self.gw, self.gb = grads

    def init_params(self, rng):
        fan_in = self.c_in * self.k * self.k
        std = self.init_std if self.init_std is not None else np.sqrt(2.0 / fan_in)
        self.w[...] = rng.normal(0.0, std, self.w.shape)
        self.b[...] = 0.0

    def forward(self, x, train):
        self._x = x
        y = kernels.conv2d_forward(x, self.w, self.stride, self.pad)
        return y + self.b.reshape(1, -1, 1, 1)

    def backward(self, gy, need_input=True):
        self.gb += gy.sum(axis=(0, 2, 3))
        self.gw += kernels.conv2d_backward_weight(
            self._x, gy, self.k, self.k, self.stride, self.pad
        )
        if not need_input:
            return None
        return kernels.conv2d_backward_input(
            gy, self.w, self._x.shape[2], self._x.shape[3], self.stride, self.pad
        )


class ConvTranspose2d(Layer):
    """Fractionally strided convolution, realized through the conv kernel trio.

    The stored weight has shape (c_in, c_out, k, k); forward is the adjoint of
    a conv whose weight it is, so the three conv kernels cover all passes.
    """

    def __init__(self, c_in, c_out, k, stride=1, pad=0, init_std=None):
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.pad, self.init_std = stride, pad, init_std

    def param_shapes(self):
        return [(self.c_in, self.c_out, self.k, self.k), (self.c_out,)]

    def bind(self, params, grads, buffers):
        self.w, self.b = params
        self.gw, self.gb = grads

    def init_params(self, rng):
        fan_in = self.c_in * self.k * self.k
        std = self.init_std if self.init_std is not None else np.sqrt(2.0 / fan_in)
        self.w[...] = rng.normal(0.0, std, self.w.shape)
        self.b[...] = 0.0

    def out_size(self, h):
        return (h - 1) * self.stride - 2 * self.pad + self.k

    def forward(self, x, train):
        self._x = x
        oh, ow = self.out_size(x.shape[2]), self.out_size(x.shape[3])
        y = kernels.conv2d_backward_input(x, self.w, oh, ow, self.stride, self.pad)
        return y + self.b.reshape(1, -1, 1, 1)

    def backward(self, gy, need_input=True):
        self.gb += gy.sum(axis=(0, 2, 3))
        self.gw += kernels.conv2d_backward_weight(
            gy, self._x, self.k, self.k, self.stride, self.pad
        )
        return kernels.conv2d_forward(gy, self.w, self.stride, self.pad) if need_input else None


class BatchNorm2d(Layer):
    def __init__(self, c, eps=1e-5, momentum=0.1, init_std=None):
        self.c, self.eps, self.momentum, self.init_std = c, eps, momentum, init_std

    def param_shapes(self):
        return [(self.c,), (self.c,)]

    def buffer_shapes(self):
        return [(self.c,), (self.c,)]

    def bind(self, params, grads, buffers):
        self.gamma, self.beta = params
        self.ggamma, self.gbeta = grads
        self.running_mean, self.running_var = buffers

    def init_params(self, rng):
        if self.init_std is not None:
            self.gamma[...] = rng.normal(1.0, self.init_std, self.gamma.shape)
        else:
            self.gamma[...] = 1.0
        self.beta[...] = 0.0
        self.running_mean[...] = 0.0
        self.running_var[...] = 1.0

    def forward(self, x, train):
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean[...] = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var[...] = (1 - self.momentum) * self.running_var + self.momentum * var
        else:
            mean, var = self.running_mean, self.running_var
        self._train = train
        self._inv_std = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mean.reshape(1, -1, 1, 1)) * self._inv_std.reshape(1, -1, 1, 1)
        return self.gamma.reshape(1, -1, 1, 1) * self._xhat + self.beta.reshape(1, -1, 1, 1)

    def backward(self, gy, need_input=True):
        self.gbeta += gy.sum(axis=(0, 2, 3))
        self.ggamma += (gy * self._xhat).sum(axis=(0, 2, 3))
        g = self.gamma.reshape(1, -1, 1, 1) * self._inv_std.reshape(1, -1, 1, 1)
        if not self._train:
            return gy * g
        m = gy.shape[0] * gy.shape[2] * gy.shape[3]
        dxhat = gy * self.gamma.reshape(1, -1, 1, 1)
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * self._xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (self._inv_std.reshape(1, -1, 1, 1) / m) * (
            m * dxhat - sum_dxhat - self._xhat * sum_dxhat_xhat
        )


class ReLU(Layer):
    def forward(self, x, train):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy, need_input=True):
        return np.where(self._mask, gy, 0.0)


class LeakyReLU(Layer):
    def __init__(self, alpha=0.2):
        self.alpha = alpha

    def forward(self, x, train):
        self._mask = x > 0
        return np.where(self._mask, x, self.alpha * x)

    def backward(self, gy, need_input=True):
        return np.where(self._mask, gy, self.alpha * gy)


class Tanh(Layer):
    def forward(self, x, train):
        self._y = np.tanh(x)
        return self._y

    def backward(self, gy, need_input=True):
        return gy * (1.0 - self._y**2)


class Sigmoid(Layer):
    def forward(self, x, train):
        self._y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                           np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return self._y

    def backward(self, gy, need_input=True):
        return gy * self._y * (1.0 - self._y)


class Flatten(Layer):
    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy, need_input=True):
        return gy.reshape(self._shape)


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)
        p_shapes = [s for l in self.layers for s in l.param_shapes()]
        b_shapes = [s for l in self.layers for s in l.buffer_shapes()]
        self.num_params = int(sum(np.prod(s) for s in p_shapes))
        self.num_buffers = int(sum(np.prod(s) for s in b_shapes))
        self._params = np.zeros(self.num_params)
        self._grads = np.zeros(self.num_params)
        self._buffers = np.zeros(self.num_buffers)
        po = bo = 0
        for layer in self.layers:
            pviews, gviews, bviews = [], [], []
            for s in layer.param_shapes():
                n = int(np.prod(s))
                pviews.append(self._params[po : po + n].reshape(s))
                gviews.append(self._grads[po : po + n].reshape(s))
                po += n
            for s in layer.buffer_shapes():
                n = int(np.prod(s))
                bviews.append(self._buffers[bo : bo + n].reshape(s))
                bo += n
            layer.bind(pviews, gviews, bviews)

    def init_params(self, rng):
        for layer in self.layers:
            layer.init_params(rng)
        return self

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, gy, input_grad=True):
        for i in range(len(self.layers) - 1, -1, -1):
            gy = self.layers[i].backward(gy, input_grad or i > 0)
        return gy

    def zero_grad(self):
        self._grads[...] = 0.0

    @property
    def grad_vector(self):
        return self._grads

    def param_vector(self):
        return self._params.copy()

    def set_param_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got shape {vec.shape}")
        self._params[...] = vec

    def state_vector(self):
        return np.concatenate([self._params, self._buffers])

    def set_state_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        n = self.num_params + self.num_buffers
        if vec.shape != (n,):
            raise ValueError(f"expected state of size {n}, got shape {vec.shape}")
        self._params[...] = vec[: self.num_params]
        self._buffers[...] = vec[self.num_params :]
