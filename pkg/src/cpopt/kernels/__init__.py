"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active backend is chosen once at import from ``CPOPT_DISABLE_NUMBA``.
Both implementations stay importable as ``numba_impl`` and ``numpy_impl``
so they can be cross-checked and benchmarked side by side.
"""
from .. import _accel
from . import _numpy as numpy_impl
from ._numpy import count_table

if _accel.HAVE_NUMBA:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_impl = numba_impl if _accel.USE_NUMBA else numpy_impl

midranks = _impl.midranks
mw_profile = _impl.mw_profile
mw_scan = _impl.mw_scan
mw_scan_batch = _impl.mw_scan_batch
stream_stats = _impl.stream_stats
sequential_scan = _impl.sequential_scan
grid_search = _impl.grid_search
garch_path = _impl.garch_path
BACKEND = _accel.backend_name()

__all__ = [
    "BACKEND", "count_table", "garch_path", "grid_search", "midranks",
    "mw_profile", "mw_scan", "mw_scan_batch", "numba_impl", "numpy_impl",
    "sequential_scan", "stream_stats",
]
