"""Select the spline kernel backend at import time.

The compiled ``_spline_core`` extension is preferred.  Setting the
environment variable ``GAMLSSKIT_PURE_PYTHON=1`` forces the fallback.
"""
import os

if os.environ.get("GAMLSSKIT_PURE_PYTHON", "") not in ("", "0"):
    from ._spline_py import band_solve, band_trace

    BACKEND = "python"
else:
    try:
        from ._spline_core import band_solve, band_trace

        BACKEND = "cython"
    except ImportError:
        from ._spline_py import band_solve, band_trace

        BACKEND = "python"

__all__ = ["BACKEND", "band_solve", "band_trace"]
