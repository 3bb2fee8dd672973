"""Exploration kernel selection.

The Cython kernel is used when the extension was built; otherwise the
pure-Python one. ``PEPAGG_KERNEL=python`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernel_py

try:
    from . import _kernel_cy
except ImportError:  # extension not built
    _kernel_cy = None

BACKENDS = {"python": _kernel_py.explore}
if _kernel_cy is not None:
    BACKENDS["cython"] = _kernel_cy.explore

DEFAULT = os.environ.get("PEPAGG_KERNEL") or ("cython" if "cython" in BACKENDS else "python")


def get_explore(backend=None):
    name = backend or DEFAULT
    if name not in BACKENDS:
        raise ValueError(f"kernel {name!r} is not available (have: {', '.join(BACKENDS)})")
    return BACKENDS[name]
