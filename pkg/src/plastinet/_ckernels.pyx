# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col/col2im kernels for batched 2-D convolution.

The column matrices feed a BLAS matmul done through numpy, so the only
loops living here are the gather/scatter ones that numpy cannot express
without temporaries.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _im2col(const double[:, :, :, ::1] x, double[:, ::1] cols,
                  Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
                  Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t n_batch = x.shape[0], c_in = x.shape[1]
    cdef Py_ssize_t h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t n, c, ki, kj, oy, ox, iy, ix, row, col
    for c in range(c_in):
        for ki in range(k):
            for kj in range(k):
                row = (c * k + ki) * k + kj
                col = 0
                for n in range(n_batch):
                    for oy in range(ho):
                        iy = oy * stride + ki - pad
                        if iy < 0 or iy >= h:
                            for ox in range(wo):
                                cols[row, col] = 0.0
                                col += 1
                            continue
                        for ox in range(wo):
                            ix = ox * stride + kj - pad
                            if ix < 0 or ix >= w:
                                cols[row, col] = 0.0
                            else:
                                cols[row, col] = x[n, c, iy, ix]
                            col += 1


cdef void _col2im(const double[:, ::1] cols, double[:, :, :, ::1] dx,
                  Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad,
                  Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t n_batch = dx.shape[0], c_in = dx.shape[1]
    cdef Py_ssize_t h = dx.shape[2], w = dx.shape[3]
    cdef Py_ssize_t n, c, ki, kj, oy, ox, iy, ix, row, col
    for c in range(c_in):
        for ki in range(k):
            for kj in range(k):
                row = (c * k + ki) * k + kj
                col = 0
                for n in range(n_batch):
                    for oy in range(ho):
                        iy = oy * stride + ki - pad
                        if iy < 0 or iy >= h:
                            col += wo
                            continue
                        for ox in range(wo):
                            ix = ox * stride + kj - pad
                            if ix >= 0 and ix < w:
                                dx[n, c, iy, ix] += cols[row, col]
                            col += 1


def conv2d_forward(x, weight, int stride, int pad):
    """Batched convolution ``x[N,C,H,W] * weight[O,C,k,k] -> [N,O,H',W']``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t o = weight.shape[0], k = weight.shape[2]
    cdef Py_ssize_t ho = (x.shape[2] + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (x.shape[3] + 2 * pad - k) // stride + 1
    cols = np.empty((c * k * k, n * ho * wo), dtype=np.float64)
    _im2col(x, cols, k, stride, pad, ho, wo)
    out = weight.reshape(o, -1) @ cols
    return np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3)), cols


def conv2d_backward(x, weight, grad_out, int stride, int pad, bint need_input_grad=True, cols=None):
    """Gradients of :func:`conv2d_forward` w.r.t. input and weight.

    ``cols`` may be the column matrix returned by the forward pass; it is
    rebuilt when omitted.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t o = weight.shape[0], k = weight.shape[2]
    cdef Py_ssize_t ho = grad_out.shape[2], wo = grad_out.shape[3]
    if cols is None:
        cols = np.empty((c * k * k, n * ho * wo), dtype=np.float64)
        _im2col(x, cols, k, stride, pad, ho, wo)
    g2d = np.ascontiguousarray(np.asarray(grad_out, dtype=np.float64).transpose(1, 0, 2, 3)).reshape(o, -1)
    grad_w = (g2d @ cols.T).reshape(weight.shape)
    if not need_input_grad:
        return None, grad_w
    dcols = np.ascontiguousarray(weight.reshape(o, -1).T @ g2d)
    grad_x = np.zeros_like(x)
    _col2im(dcols, grad_x, k, stride, pad, ho, wo)
    return grad_x, grad_w
