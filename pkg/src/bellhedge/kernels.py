"""Kernel backend selection.

The compiled extension is preferred; set ``BELLHEDGE_PURE_PYTHON=1`` to force
the numpy fallback (both expose the same ``oce_rows`` signature).
"""

import os

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

if os.environ.get("BELLHEDGE_PURE_PYTHON") or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = _BACKENDS[BACKEND]


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Module implementing ``oce_rows`` for ``name`` (default: the active one)."""
    if name is None:
        return _impl
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}") from None


def oce_rows(code, lam, x, p):
    return _impl.oce_rows(code, lam, x, p)
