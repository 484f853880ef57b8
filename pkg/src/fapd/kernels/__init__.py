"""Backend selection for the hot kernels.

The compiled extension (`fapd.kernels._core`, Cython) is preferred when
present; the pure-numpy fallback is always available. Set FAPD_BACKEND to
"compiled" or "python" to force one (forcing "compiled" without the built
extension is an import error). Both backends share signatures and semantics;
see benchmarks/bench_kernels.py for a speed comparison.
"""

import os

from . import _fallback

_requested = os.environ.get("FAPD_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _fallback
elif _requested == "compiled":
    from . import _core as _impl  # noqa: F401
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

BACKEND_NAME = _impl.BACKEND_NAME
jacobi_eigh = _impl.jacobi_eigh
forward_batch = _impl.forward_batch
backward_batch = _impl.backward_batch
