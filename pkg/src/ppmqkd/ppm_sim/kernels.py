"""Backend selection for the hot loop: compiled extension if built, else pure Python.

Set ``PPMQKD_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py.resolve_clicks

if os.environ.get("PPMQKD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled.resolve_clicks
        BACKEND = "cython"


def resolve_clicks(prompt_key, prompt_fr, u_key, u_fr, delay_key, delay_fr, N, p_ap,
                   backend: str | None = None):
    """Dispatch to the selected backend; ``backend`` forces "python" or "cython"."""
    args = (np.ascontiguousarray(prompt_key, dtype=np.int16),
            np.ascontiguousarray(prompt_fr, dtype=np.int16),
            np.ascontiguousarray(u_key, dtype=np.float64),
            np.ascontiguousarray(u_fr, dtype=np.float64),
            np.ascontiguousarray(delay_key, dtype=np.int64),
            np.ascontiguousarray(delay_fr, dtype=np.int64),
            int(N), float(p_ap))
    if backend == "python":
        return _kernels_py.resolve_clicks(*args)
    if backend == "cython":
        from . import _kernels as _compiled
        return _compiled.resolve_clicks(*args)
    return _impl(*args)
