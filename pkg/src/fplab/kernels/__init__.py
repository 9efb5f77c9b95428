"""Convolution kernel backends.

Two interchangeable implementations of the three hot kernels (conv2d forward,
input gradient, weight gradient): a compiled Cython extension and a pure-numpy
fallback. The extension is preferred when built; ``FPLAB_BACKEND=numpy`` or
``FPLAB_BACKEND=ext`` forces the choice. ``benchmarks/bench_conv.py`` compares
the two.
"""

import os

from . import numpy_backend
from ..errors import InvalidConfigError

_BACKENDS = {"numpy": numpy_backend}

try:
    from . import _convops

    _BACKENDS["ext"] = _convops
except ImportError:
    pass

_active_name = None
_active = None


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return _active_name


def set_backend(name):
    global _active, _active_name
    if name not in _BACKENDS:
        raise InvalidConfigError(
            f"unknown kernel backend {name!r}; available: {available_backends()}"
        )
    _active = _BACKENDS[name]
    _active_name = name


def conv2d_forward(x, w, stride, pad):
    return _active.conv2d_forward(x, w, stride, pad)


def conv2d_backward_weight(x, gy, kh, kw, stride, pad):
    return _active.conv2d_backward_weight(x, gy, kh, kw, stride, pad)


def conv2d_backward_input(gy, w, h, wd, stride, pad):
    return _active.conv2d_backward_input(gy, w, h, wd, stride, pad)


set_backend(os.environ.get("FPLAB_BACKEND") or ("ext" if "ext" in _BACKENDS else "numpy"))
