"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting the environment
variable ``CONDRISK_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py as python_backend
from ._kernels_py import (EPANECHNIKOV, GAUSSIAN, OK, RIDGED, SINGULAR,
                          SUPPORT, TRIWEIGHT, kernel_1d)

try:
    from . import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("CONDRISK_PURE_PYTHON"):
    backend = compiled_backend
    BACKEND = "compiled"
else:
    backend = python_backend
    BACKEND = "python"

KERNELS = {"triweight": TRIWEIGHT, "epanechnikov": EPANECHNIKOV,
           "gaussian": GAUSSIAN}


def kernel_id(name):
    if isinstance(name, int):
        return name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}") from None


def local_linear_weights(targets, locs, hinv, det_h, kind=TRIWEIGHT):
    return backend.local_linear_weights(targets, locs, hinv, float(det_h),
                                        int(kind))


def lag_moments(lags, counts, sums, queries, h, kind=TRIWEIGHT):
    return backend.lag_moments(lags, counts, sums, queries, float(h), int(kind))


__all__ = ["BACKEND", "EPANECHNIKOV", "GAUSSIAN", "KERNELS", "OK", "RIDGED",
           "SINGULAR", "SUPPORT", "TRIWEIGHT", "backend", "compiled_backend",
           "kernel_1d", "kernel_id", "lag_moments", "local_linear_weights",
           "python_backend"]
