"""Backend selection for the convolution/pooling kernels.

numba is used when importable unless ``CAREWATCH_DISABLE_JIT`` is set to a
non-empty value other than ``0``.
"""

import os

from . import _kernels_numpy

BACKEND = "numpy"
_impl = _kernels_numpy

if os.environ.get("CAREWATCH_DISABLE_JIT", "") in ("", "0"):
    try:
        from . import _kernels_numba as _impl  # noqa: F811
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba missing
        pass

conv3d_forward = _impl.conv3d_forward
conv3d_backward = _impl.conv3d_backward
maxpool3d_forward = _impl.maxpool3d_forward
maxpool3d_backward = _impl.maxpool3d_backward
