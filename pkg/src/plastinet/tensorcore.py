"""Dense float64 array operations with explicit backward rules.

Tensors are plain C-contiguous ``numpy.float64`` arrays.  Every forward op
here has a matching ``*_backward`` that maps an upstream gradient to the
gradients of its inputs; there is no tape, callers chain the rules by hand.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from . import kernels

MAGIC = b"PTNS"


class DimensionError(ValueError):
    """Raised when operand extents are incompatible."""


def as_tensor(data, shape=None) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != arr.size:
            raise DimensionError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    return arr


@dataclass
class GradPair:
    """A parameter value and its accumulated gradient (same shape)."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


# --- matmul -----------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(a, b, grad):
    return grad @ b.T, a.T @ grad


# --- conv2d -----------------------------------------------------------------

def conv_output_extent(size: int, k: int, stride: int, pad: int) -> int:
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    span = size + 2 * pad - k
    if span < 0:
        raise DimensionError(f"kernel {k} larger than padded extent {size + 2 * pad}")
    return span // stride + 1


def _check_conv(x, kernels_, stride, pad):
    if x.ndim != 4 or kernels_.ndim != 4:
        raise DimensionError(f"conv2d expects C×H×W or N×C×H×W input and O×C×k×k kernels, got {x.shape}, {kernels_.shape}")
    if x.shape[1] != kernels_.shape[1] or kernels_.shape[2] != kernels_.shape[3]:
        raise DimensionError(f"conv2d channel/kernel mismatch: input {x.shape}, kernels {kernels_.shape}")
    k = kernels_.shape[2]
    conv_output_extent(x.shape[2], k, stride, pad)
    conv_output_extent(x.shape[3], k, stride, pad)


def conv2d(x: np.ndarray, kernels_: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate ``x`` (C×H×W or N×C×H×W) with ``kernels_`` (O×C×k×k), zero padding."""
    single = x.ndim == 3
    xb = x[None] if single else x
    _check_conv(xb, kernels_, stride, pad)
    out, _ = kernels.conv2d_forward(xb, kernels_, stride, pad)
    return out[0] if single else out


def conv2d_backward(x, kernels_, grad, stride: int = 1, pad: int = 0, need_input_grad: bool = True):
    """Return ``(grad_input, grad_kernels)``; ``grad_input`` is None when not requested."""
    single = x.ndim == 3
    xb, gb = (x[None], grad[None]) if single else (x, grad)
    gx, gw = kernels.conv2d_backward(xb, kernels_, gb, stride, pad, need_input_grad)
    if single and gx is not None:
        gx = gx[0]
    return gx, gw


# --- elementwise and pooling -----------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x, grad):
    # subgradient at exactly 0 is 0
    return np.where(x > 0.0, grad, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sigmoid_backward(y, grad):
    """Gradient through sigmoid given its output ``y``."""
    return grad * y * (1.0 - y)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the two trailing spatial axes (C×H×W -> C, N×C×H×W -> N×C)."""
    return x.mean(axis=(-2, -1))


def global_avg_pool_backward(shape, grad):
    h, w = shape[-2:]
    return np.broadcast_to((grad / (h * w))[..., None, None], shape).copy()


# --- PTNS serialization -----------------------------------------------------

def write_tensor(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype=np.float64)
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
    count = int(np.prod(shape)) if rank else 1
    payload = fh.read(8 * count)
    if len(payload) != 8 * count:
        raise ValueError("truncated tensor payload")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def save_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
