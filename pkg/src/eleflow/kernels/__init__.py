"""Kernel backend selection.

The compiled extension is used when importable; otherwise numpy
reference kernels take over. ELEFLOW_KERNELS=python|compiled forces a
backend ("compiled" raises if the extension is unavailable). Both
backends are deterministic run-to-run, but their floating-point ops are
not guaranteed bit-identical to each other.
"""

import os

from . import reference

_requested = os.environ.get("ELEFLOW_KERNELS", "auto").lower()
if _requested not in ("auto", "python", "compiled"):
    raise ValueError(f"ELEFLOW_KERNELS must be auto|python|compiled, got {_requested!r}")

_impl = reference
_backend = "python"
if _requested in ("auto", "compiled"):
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]

        _backend = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise

sigmoid = reference.sigmoid
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
maxpool1d_forward = _impl.maxpool1d_forward
maxpool1d_backward = _impl.maxpool1d_backward
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def backend() -> str:
    """Name of the active backend: "compiled" or "python"."""
    return _backend
