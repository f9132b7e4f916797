"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``ORBITALCLUSTER_BACKEND=python`` to force the fallback (``cython`` makes
a missing extension an error).
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = ("cython", "python")


def get_kernels(name: str | None = None) -> ModuleType:
    name = (name or os.environ.get("ORBITALCLUSTER_BACKEND") or "auto").lower()
    if name == "auto":
        return _ckernels if _ckernels is not None else _pykernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels requested but orbitalcluster._ckernels is not built")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS} or 'auto'")


def backend_name(mod: ModuleType | None = None) -> str:
    return "cython" if (mod or get_kernels()) is _ckernels and _ckernels is not None else "python"


kernels = get_kernels()
BACKEND = backend_name(kernels)
