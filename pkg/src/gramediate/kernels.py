"""Kernel selection: compiled extension when importable, numpy fallback otherwise.

Set ``GRAMEDIATE_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _ipf_py

__all__ = ["BACKEND", "ipf", "available_backends", "get_ipf"]

_BACKENDS = {"python": _ipf_py.ipf}
try:
    from . import _ipf_ext
except ImportError:  # extension not built
    _ipf_ext = None
else:
    _BACKENDS["cython"] = _ipf_ext.ipf

if os.environ.get("GRAMEDIATE_PURE_PYTHON", "") not in ("", "0") or _ipf_ext is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

ipf = _BACKENDS[BACKEND]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_ipf(backend: str | None = None):
    if backend is None:
        return ipf
    try:
        return _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"IPF backend {backend!r} unavailable; have {available_backends()}") from None
