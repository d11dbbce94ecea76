"""Kernel backend selection.

The density evaluation and the greedy matcher are the two inner loops that
dominate runtime on large cohorts.  A compiled extension provides them when
it built successfully; otherwise the NumPy implementations take over.  Set
``STUDYPILOT_KERNELS=py`` to force the fallback or ``=c`` to insist on the
extension (raising if it is missing).
"""
import os

from . import pykernels

_choice = os.environ.get("STUDYPILOT_KERNELS", "auto")
if _choice not in ("auto", "c", "py"):
    raise ImportError(f"STUDYPILOT_KERNELS must be auto, c or py, not {_choice!r}")

_impl = None
if _choice in ("auto", "c"):
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "c":
            raise ImportError(
                "STUDYPILOT_KERNELS=c but the compiled extension is not available"
            )
if _impl is None:
    _impl = pykernels

kde_gauss_reflect = _impl.kde_gauss_reflect
greedy_caliper_match = _impl.greedy_caliper_match


def kernel_backend() -> str:
    """Name of the active backend: ``"compiled"`` or ``"python"``."""
    return "python" if _impl is pykernels else "compiled"
