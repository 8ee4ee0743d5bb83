"""Backend selection for the hot numeric kernels.

By default the inner loops (Fenwick-tree ops, Euler-Maruyama paths, the
self-interacting relocation loop) are compiled with numba's ``@njit``.
Setting the environment variable ``MVPP_NUMBA=0`` (or ``off``/``false``)
before import runs the very same functions as plain Python over numpy
arrays instead.

Both paths execute identical floating-point operations in identical order
and consume random draws identically, so results are bit-for-bit equal
across backends; only throughput differs (see benchmarks/bench_backends.py).
"""

from __future__ import annotations

import os


def _flag_enabled() -> bool:
    raw = os.environ.get("MVPP_NUMBA", "1").strip().lower()
    return raw not in ("0", "off", "false", "no")


NUMBA_ENABLED = _flag_enabled()

if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "python"


def hot(func):
    """Decorate a hot kernel: numba-compiled, or left as-is under MVPP_NUMBA=0."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func


def hot_closure(func):
    """Like :func:`hot` for closures built at runtime (numba cannot cache those)."""
    if NUMBA_ENABLED:
        return _njit(cache=False)(func)
    return func


def is_compiled(func) -> bool:
    if not NUMBA_ENABLED:
        return True  # plain callables are fine for the python backend
    from numba.core.dispatcher import Dispatcher

    return isinstance(func, Dispatcher)


def ensure_compiled(func):
    """Return a version of ``func`` callable from inside hot kernels.

    User-supplied plain-Python callables are jitted lazily when the numba
    backend is active; compilation errors surface at first call.
    """
    if is_compiled(func):
        return func
    return _njit(cache=False)(func)
