"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is imported. Setting ``PROSIM_PURE_PYTHON=1`` forces the fallback.
"""

import os

from prosim import _kernels_py

if os.environ.get("PROSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from prosim import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

neighbor_mask = _impl.neighbor_mask
listener_sinr = _impl.listener_sinr
mc_sinr_count = _impl.mc_sinr_count
mac_select = _impl.mac_select
link_probabilities = _impl.link_probabilities
forecast_links = _impl.forecast_links


def compiled_available() -> bool:
    try:
        from prosim import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from prosim import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
