"""Backend selection for the convolution kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported.  Setting ``PLASTINET_PURE_PYTHON=1`` forces the
fallback, which the test-suite uses to exercise both paths.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

if os.environ.get("PLASTINET_PURE_PYTHON", "") not in ("", "0") or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

_active = BACKENDS[BACKEND]
conv2d_forward = _active.conv2d_forward
conv2d_backward = _active.conv2d_backward
