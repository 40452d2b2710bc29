"""Pure numpy fallback for the convolution kernels.

Same contract as the compiled ``_ckernels`` module.  The column matrix is
assembled by looping over the k*k kernel offsets with strided slices.
"""

import numpy as np


def _padded(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(x, k, stride, pad, ho, wo):
    n, c = x.shape[:2]
    xp = _padded(x, pad)
    cols = np.empty((c, k, k, n, ho, wo), dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, :, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride]
            cols[:, ki, kj] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * k * k, n * ho * wo)


def conv2d_forward(x, weight, stride, pad):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    n = x.shape[0]
    o, _, k, _ = weight.shape
    ho = (x.shape[2] + 2 * pad - k) // stride + 1
    wo = (x.shape[3] + 2 * pad - k) // stride + 1
    cols = _im2col(x, k, stride, pad, ho, wo)
    out = weight.reshape(o, -1) @ cols
    return np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3)), cols


def conv2d_backward(x, weight, grad_out, stride, pad, need_input_grad=True, cols=None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    ho, wo = grad_out.shape[2:]
    if cols is None:
        cols = _im2col(x, k, stride, pad, ho, wo)
    g2d = np.ascontiguousarray(np.asarray(grad_out, dtype=np.float64).transpose(1, 0, 2, 3)).reshape(o, -1)
    grad_w = (g2d @ cols.T).reshape(weight.shape)
    if not need_input_grad:
        return None, grad_w
    dcols = (weight.reshape(o, -1).T @ g2d).reshape(c, k, k, n, ho, wo)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += dcols[:, ki, kj].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w]), grad_w
