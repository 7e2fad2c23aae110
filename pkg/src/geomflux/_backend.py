"""Select the Verlet kernel backend at import.

The compiled extension is used when it imports; setting
``GEOMFLUX_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("GEOMFLUX_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as kernels
except ImportError:
    kernels = _kernels_py

BACKEND = kernels.BACKEND


def get_kernels(name: str | None = None):
    """Return the kernel module for ``name`` (``compiled``/``python``) or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
