# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels.

Same im2col / col2im + GEMM algorithm as fplab.kernels.numpy_backend, with the
gather/scatter stages as tight C loops (padding handled by bounds checks, no
intermediate padded buffers). The GEMM itself stays in BLAS.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef _im2col(double[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cols_arr = np.zeros((n * oh * ow, ci * kh * kw), dtype=np.float64)
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t b, i, j, c, p, q, ih, iw, row, col
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                row = (b * oh + i) * ow + j
                for c in range(ci):
                    for p in range(kh):
                        ih = i * stride - pad + p
                        if ih < 0 or ih >= h:
                            continue
                        for q in range(kw):
                            iw = j * stride - pad + q
                            if iw < 0 or iw >= wd:
                                continue
                            col = (c * kh + p) * kw + q
                            cols[row, col] = x[b, c, ih, iw]
    return cols_arr


def conv2d_forward(x_arr, w_arr, int stride, int pad):
    x = np.ascontiguousarray(x_arr, dtype=np.float64)
    w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (wd + 2 * pad - kw) // stride + 1
    cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    y = cols @ w.reshape(co, -1).T
    return np.ascontiguousarray(y.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))


def conv2d_backward_weight(x_arr, gy_arr, int kh, int kw, int stride, int pad):
    x = np.ascontiguousarray(x_arr, dtype=np.float64)
    gy = np.ascontiguousarray(gy_arr, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], ci = x.shape[1]
    cdef Py_ssize_t co = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    cols = _im2col(x, kh, kw, stride, pad, oh, ow)
    gmat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(n * oh * ow, co)
    return (gmat.T @ cols).reshape(co, ci, kh, kw)


def conv2d_backward_input(gy_arr, w_arr, int h, int wd, int stride, int pad):
    gy = np.ascontiguousarray(gy_arr, dtype=np.float64)
    w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef Py_ssize_t n = gy.shape[0], co = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3]
    cdef Py_ssize_t ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    gmat = np.ascontiguousarray(gy.transpose(0, 2, 3, 1)).reshape(n * oh * ow, co)
    cols_arr = gmat @ w.reshape(co, -1)  # (n*oh*ow, ci*kh*kw)
    cdef double[:, ::1] cols = np.ascontiguousarray(cols_arr)
    gx_arr = np.zeros((n, ci, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, i, j, c, p, q, ih, iw, row, col
    # accumulate kernel-tap major so the add order matches the numpy backend
    for p in range(kh):
        for q in range(kw):
            for b in range(n):
                for i in range(oh):
                    ih = i * stride - pad + p
                    if ih < 0 or ih >= h:
                        continue
                    for j in range(ow):
                        iw = j * stride - pad + q
                        if iw < 0 or iw >= wd:
                            continue
                        row = (b * oh + i) * ow + j
                        for c in range(ci):
                            col = (c * kh + p) * kw + q
                            gx[b, c, ih, iw] += cols[row, col]
    return gx_arr
