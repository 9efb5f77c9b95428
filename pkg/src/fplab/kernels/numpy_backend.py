"""Pure-numpy convolution kernels (im2col / col2im + BLAS matmul).

All tensors are float64, NCHW layout. This backend is the fallback when the
compiled extension is unavailable; the extension implements the same
algorithm with the gather/scatter stages in C.
"""

import numpy as np


def _out_size(h, k, stride, pad):
    return (h + 2 * pad - k) // stride + 1


def _im2col(x, kh, kw, stride, pad, oh, ow):
    """Unfold x (N,C,H,W) into patch columns of shape (N*OH*OW, C*kh*kw)."""
    n, c, _, _ = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, oh, ow, c, kh, kw))
    for p in range(kh):
        for q in range(kw):
            patch = x[:, :, p : p + (oh - 1) * stride + 1 : stride,
                      q : q + (ow - 1) * stride + 1 : stride]
            cols[:, :, :, :, p, q] = patch.transpose(0, 2, 3, 1)
    return cols.reshape(n * oh * ow, c * kh * kw)


def conv2d_forward(x, w, stride, pad):
    """Cross-correlate x (N,Ci,H,W) with w (Co,Ci,kh,kw)."""
    n, _, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh, ow = _out_size(h, kh, stride, pad), _out_size(wd, kw, stride, pad)
    cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    y = cols @ w.reshape(co, -1).T
    return np.ascontiguousarray(y.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))


def conv2d_backward_weight(x, gy, kh, kw, stride, pad):
    """Gradient of conv2d_forward w.r.t. the kernel w (Co,Ci,kh,kw)."""
    n, ci, _, _ = x.shape
    _, co, oh, ow = gy.shape
    cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    gmat = gy.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
    return (gmat.T @ cols).reshape(co, ci, kh, kw)


def conv2d_backward_input(gy, w, h, wd, stride, pad):
    """Gradient of conv2d_forward w.r.t. its input, for an input of H=h, W=wd.

    col2im: project the output gradient through the kernel, then scatter-add
    each kernel tap back onto the (padded) input grid. Doubles as the
    transposed-convolution forward pass.
    """
    n, co, oh, ow = gy.shape
    _, ci, kh, kw = w.shape
    gmat = gy.transpose(0, 2, 3, 1).reshape(n * oh * ow, co)
    cols = (gmat @ w.reshape(co, -1)).reshape(n, oh, ow, ci, kh, kw)
    gx = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad))
    for p in range(kh):
        for q in range(kw):
            gx[:, :, p : p + (oh - 1) * stride + 1 : stride,
               q : q + (ow - 1) * stride + 1 : stride] += cols[:, :, :, :, p, q].transpose(
                0, 3, 1, 2
            )
    if pad:
        gx = gx[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(gx)
