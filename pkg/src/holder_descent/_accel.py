"""JIT switch.

Hot loops are compiled with numba when it is importable and the
``HOLDER_DESCENT_JIT`` environment variable is not set to a false value
(``0``, ``false``, ``no``, ``off``).  Otherwise every kernel runs through
its vectorised numpy counterpart.  The flag is read once, at import.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_FALSE = {"0", "false", "no", "off"}


def _flag_enabled() -> bool:
    return os.environ.get("HOLDER_DESCENT_JIT", "1").strip().lower() not in _FALSE


JIT_ENABLED = HAVE_NUMBA and _flag_enabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, identity decorator otherwise.

    Compilation is lazy, so decorating costs nothing when the numpy path
    is selected.
    """
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def backend_name() -> str:
    return "numba" if JIT_ENABLED else "numpy"
