"""Kernel backend selection.

The compiled extension is used when importable; setting the
environment variable ``RWMCV_PURE_PYTHON=1`` forces the NumPy fallback.
"""
import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("RWMCV_PURE_PYTHON"):
    kernels = _compiled
else:
    kernels = _pykernels

NAME = kernels.NAME


def available():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def use(name):
    """Switch the active backend (process-wide)."""
    global kernels, NAME
    kernels = get(name)
    NAME = kernels.NAME
