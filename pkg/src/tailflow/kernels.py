"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``TAILFLOW_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementations are used.  ``BACKEND`` names the
active choice.
"""
from __future__ import annotations

import os

from . import _pykernels

_force_pure = os.environ.get("TAILFLOW_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_pure:
        raise ImportError
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

count_inversions = _impl.count_inversions
pairwise_distance_sum = _impl.pairwise_distance_sum
pairwise_distance_sum_within = _impl.pairwise_distance_sum_within


def backends() -> dict:
    """All importable implementations, keyed by name (used by the benchmark)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
