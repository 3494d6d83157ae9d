"""Kernel dispatch: compiled extension when built, pure Python otherwise.

Set ``ASTRODIAG_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

BACKEND: str
_impl: ModuleType

if os.environ.get("ASTRODIAG_PURE_PYTHON") == "1":
    _impl, BACKEND = _kernels_py, "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl, BACKEND = _kernels_py, "python"

settle_order = _impl.settle_order
propagate = _impl.propagate
simple_paths = _impl.simple_paths
path_reliabilities = _impl.path_reliabilities


def implementations() -> dict[str, ModuleType]:
    """Every kernel implementation importable in this environment."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
