"""Kernel backend selection.

The compiled extension is used when it imports; set ``SPECTRUM_LEASING_PURE=1``
to force the NumPy fallback (used by the benchmark and the parity tests).
"""
import os

from . import _kernels_py

if os.environ.get("SPECTRUM_LEASING_PURE") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

phi_integrals = _impl.phi_integrals
phi_jacobian = _impl.phi_jacobian
schedule_slots = _impl.schedule_slots


def get_backend(name):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
