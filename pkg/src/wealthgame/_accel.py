"""Numba acceleration shim.

Hot kernels are written once, in nopython-compatible numpy, and decorated with
:func:`maybe_jit`.  The environment variable ``WEALTHGAME_NUMBA`` selects the
execution path:

* unset or ``1`` -- JIT-compile with numba when it is importable,
* ``0`` -- run the same source as plain numpy (the fallback path).

When a kernel is jitted, its original Python implementation stays reachable as
``kernel.py_func``, which is what the benchmark uses to compare both paths.
"""

import os
import warnings

_flag = os.environ.get("WEALTHGAME_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    _njit = None
    HAVE_NUMBA = False
    if _want_numba:
        warnings.warn("numba not importable; hot kernels run as pure numpy")

USING_NUMBA = _want_numba and HAVE_NUMBA


def maybe_jit(func):
    """Apply @njit when the numba path is active, otherwise return func as is."""
    if USING_NUMBA:
        return _njit(cache=True)(func)
    return func


def active_backend() -> str:
    return "numba" if USING_NUMBA else "numpy"
