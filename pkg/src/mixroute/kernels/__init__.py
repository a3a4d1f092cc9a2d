"""Kernel backend selection.

Two interchangeable implementations of the hot array kernels exist: the
compiled Cython extension (``_fast``) and the numpy reference
(``numpy_backend``).  The compiled one is picked at import when present;
``MIXROUTE_KERNELS=python|compiled`` overrides, and :func:`use` switches at
runtime (used by the benchmark and the cross-backend tests).
"""

import os
import warnings

from . import numpy_backend

_BACKENDS = {"python": numpy_backend}

try:
    from . import _fast

    _BACKENDS["compiled"] = _fast
except ImportError:  # pragma: no cover - depends on whether the ext built
    _fast = None

active = numpy_backend


def available():
    """Names of the importable backends."""
    return sorted(_BACKENDS)


def use(name):
    """Switch the active backend; returns the previously active name."""
    global active
    if name not in _BACKENDS:
        raise KeyError(f"unknown kernel backend {name!r}; have {available()}")
    previous = active.name
    active = _BACKENDS[name]
    return previous


def active_name():
    return active.name


_requested = os.environ.get("MIXROUTE_KERNELS", "auto")
if _requested == "auto":
    use("compiled" if "compiled" in _BACKENDS else "python")
elif _requested in _BACKENDS:
    use(_requested)
else:
    warnings.warn(
        f"MIXROUTE_KERNELS={_requested!r} unavailable; using numpy backend"
    )
    use("python")
