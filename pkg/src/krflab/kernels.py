"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementations take over. Set ``KRFLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("KRFLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND

hsc_ascent = _impl.hsc_ascent
grid_metric = _impl.grid_metric
grid_velocity = _impl.grid_velocity
grid_rk4_step = _impl.grid_rk4_step
grid_schwarz_extrema = _impl.grid_schwarz_extrema
grid_fields = _impl.grid_fields
