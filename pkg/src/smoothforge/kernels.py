"""Backend selection for the hot kernels.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``SMOOTHFORGE_BACKEND=python`` is set in the environment.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def get_backend(name: str = "auto") -> ModuleType:
    """Return the kernel module for ``name`` in {"auto", "cython", "python"}."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _ckernels
    if name != "auto":
        raise ValueError(f"unknown backend {name!r}")
    return _ckernels if _ckernels is not None else _pykernels


def backend_name(mod: ModuleType) -> str:
    return "cython" if mod is _ckernels and mod is not None else "python"


HAVE_COMPILED = _ckernels is not None
_env = os.environ.get("SMOOTHFORGE_BACKEND", "auto")
default = get_backend("python" if _env == "python" else "auto")
BACKEND = backend_name(default)
