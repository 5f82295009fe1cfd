"""Selection between the compiled and pure-Python walk kernels.

The compiled kernel is preferred when the extension was built; set
``GRFGP_BACKEND=python`` (or ``cython``) to force a choice, e.g. for the
backend benchmark or to debug the fallback.
"""

from __future__ import annotations

import os

from . import _walk_py

try:
    from . import _walk_cy
except ImportError:  # extension not built
    _walk_cy = None

_MODULES = {"python": _walk_py, "cython": _walk_cy}


def available_backends() -> tuple[str, ...]:
    return tuple(name for name, mod in _MODULES.items() if mod is not None)


def default_backend() -> str:
    forced = os.environ.get("GRFGP_BACKEND")
    if forced:
        return forced
    return "cython" if _walk_cy is not None else "python"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (default: best available)."""
    name = name or default_backend()
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; expected 'cython' or 'python'")
    mod = _MODULES[name]
    if mod is None:
        raise RuntimeError(
            "compiled walk kernel is not built; install with "
            "`pip install -e . --no-build-isolation` or use backend='python'"
        )
    return mod
