"""Kernel backend selection.

The hot elementwise kernels exist twice: a Cython extension (``_core``) and a
vectorized numpy fallback (``py_kernels``). The compiled one is picked at
import when available; ``LIEOPT_BACKEND=python|compiled`` forces a choice,
and :func:`use` switches at runtime (the benchmark uses this to compare
the two implementations).
"""

import os
from contextlib import contextmanager

from . import py_kernels

try:
    from . import _core
except ImportError:
    _core = None

_requested = os.environ.get("LIEOPT_BACKEND", "auto")
if _requested == "compiled" and _core is None:
    raise ImportError(
        "LIEOPT_BACKEND=compiled but the lieopt.backend._core extension is "
        "not built; install with `pip install -e . --no-build-isolation`"
    )

_active = py_kernels if (_requested == "python" or _core is None) else _core


def available():
    """Names of the importable backends."""
    names = ["python"]
    if _core is not None:
        names.insert(0, "compiled")
    return names


def active_name():
    return _active.NAME


def kernels():
    """Module providing the flat-array kernel functions."""
    return _active


def _resolve(name):
    if name in ("python", "py"):
        return py_kernels
    if name == "compiled":
        if _core is None:
            raise ValueError("compiled backend is not built")
        return _core
    if name == "auto":
        return _core if _core is not None else py_kernels
    raise ValueError(f"unknown backend {name!r}")


@contextmanager
def use(name):
    """Temporarily switch the kernel backend (not thread-safe)."""
    global _active
    prev = _active
    _active = _resolve(name)
    try:
        yield _active
    finally:
        _active = prev


def set_backend(name):
    global _active
    _active = _resolve(name)
