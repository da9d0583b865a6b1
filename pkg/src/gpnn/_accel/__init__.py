"""Hot-kernel backend selection.

Two implementations of the inner-loop kernels exist: a compiled Cython
core (``ckernels``, built via ``python setup.py build_ext --inplace``)
and a numpy fallback (``pykernels``). The compiled core is preferred when
present; ``GPNN_BACKEND=python`` or ``GPNN_BACKEND=cython`` forces a
choice at import time, and ``use_backend()`` switches at runtime (used by
the benchmark). Callers must access kernels through this module
(``_accel.bfs_sequences(...)``) so the switch takes effect.
"""

import os

from . import pykernels

try:
    from . import ckernels as _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"python": pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active_name = None
bfs_sequences = None
scatter_add_rows = None


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    """Name of the active backend: 'cython' or 'python'."""
    return _active_name


def use_backend(name):
    """Switch the active kernel backend; raises if `name` was not built."""
    global _active_name, bfs_sequences, scatter_add_rows
    if name not in _BACKENDS:
        raise ValueError(
            f"backend {name!r} not available (have {available_backends()}); "
            "build the compiled core with: python setup.py build_ext --inplace"
        )
    impl = _BACKENDS[name]
    _active_name = name
    bfs_sequences = impl.bfs_sequences
    scatter_add_rows = impl.scatter_add_rows
    return name


_requested = os.environ.get("GPNN_BACKEND", "auto").lower()
if _requested == "auto":
    use_backend("cython" if "cython" in _BACKENDS else "python")
else:
    use_backend(_requested)
