"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation.  Set ``ORSALAB_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
alm_project = _kernels_py.alm_project
npv_accumulate = _kernels_py.npv_accumulate

if os.environ.get("ORSALAB_BACKEND", "auto").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if os.environ.get("ORSALAB_BACKEND", "auto").lower() == "cython":
            raise
    else:
        BACKEND = "cython"
        alm_project = _compiled.alm_project
        npv_accumulate = _compiled.npv_accumulate


def compiled_available():
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
