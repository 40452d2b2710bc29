import numpy as np
import pytest

from plastinet import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request, monkeypatch):
    """Run a test once per available convolution backend."""
    mod = kernels.BACKENDS[request.param]
    monkeypatch.setattr(kernels, "conv2d_forward", mod.conv2d_forward)
    monkeypatch.setattr(kernels, "conv2d_backward", mod.conv2d_backward)
    return request.param


def central_difference(f, x, h=1e-5):
    """Numeric gradient of scalar ``f`` w.r.t. every entry of array ``x`` (modified in place, restored)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return grad


def max_rel_err(analytic, numeric):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
