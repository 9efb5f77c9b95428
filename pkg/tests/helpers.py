"""Shared test oracles: naive convolution and central finite differences."""

import numpy as np


def naive_conv2d(x, w, stride, pad):
    """Reference cross-correlation, straight from the definition."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    y = np.zeros((n, co, oh, ow))
    for b in range(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[b, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    y[b, o, i, j] = (patch * w[o]).sum()
    return y


def central_diff_grad(f, theta, h=1e-5):
    """Central finite differences of scalar f at parameter vector theta."""
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


def assert_grads_close(analytic, numeric, rel_tol, abs_tol):
    """A coordinate passes on absolute OR relative tolerance.

    The absolute branch absorbs finite-difference noise on dead coordinates
    (e.g. a conv bias feeding batch norm has an exactly-zero true gradient).
    """
    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel_err = np.where(scale > 0, abs_err / scale, 0.0)
    bad = (abs_err > abs_tol) & (rel_err > rel_tol)
    if bad.any():
        i = int(np.argmax(np.where(bad, rel_err, 0.0)))
        raise AssertionError(
            f"{int(bad.sum())} gradient coords off; worst at {i}: "
            f"analytic={analytic[i]:.6e} numeric={numeric[i]:.6e} "
            f"rel={rel_err[i]:.3e} abs={abs_err[i]:.3e}"
        )
