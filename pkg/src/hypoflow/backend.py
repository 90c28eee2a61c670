"""Numba/numpy backend selection.

Hot kernels are compiled with numba when it is importable and the
environment variable ``HYPOFLOW_NUMBA`` is not set to ``0``.  Setting
``HYPOFLOW_NUMBA=0`` forces the pure-numpy path everywhere, which is the
reference implementation used by the benchmark and by models whose
coefficient callbacks are plain Python.
"""

import contextlib
import os
import threading

__all__ = ["NUMBA_ENABLED", "maybe_njit", "is_dispatcher",
           "default_threads", "force_python", "force_python_active"]

_local = threading.local()


def _numba_wanted() -> bool:
    flag = os.environ.get("HYPOFLOW_NUMBA", "").strip().lower()
    if flag in ("0", "off", "false", "no"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_wanted()

if NUMBA_ENABLED:
    import numba
    from numba.core.registry import CPUDispatcher


def maybe_njit(fn):
    """Compile ``fn`` with numba when the backend is enabled, else return
    it unchanged.  Kernels release the GIL so path workers can overlap."""
    if NUMBA_ENABLED:
        return numba.njit(cache=False, nogil=True)(fn)
    return fn


def is_dispatcher(fn) -> bool:
    """True when ``fn`` is a numba-compiled function usable inside kernels."""
    if not NUMBA_ENABLED:
        return False
    return isinstance(fn, CPUDispatcher)


def force_python_active() -> bool:
    return getattr(_local, "force_python", False)


@contextlib.contextmanager
def force_python():
    """Run the enclosed block on the pure-numpy engine even when numba is
    available.  Thread-local: affects only the calling thread."""
    old = getattr(_local, "force_python", False)
    _local.force_python = True
    try:
        yield
    finally:
        _local.force_python = old


def default_threads() -> int:
    """Thread count from HYPOFLOW_THREADS, defaulting to 1."""
    raw = os.environ.get("HYPOFLOW_THREADS", "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)
