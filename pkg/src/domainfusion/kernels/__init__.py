"""Hot numeric kernels with a jitted and a pure-numpy backend.

The active backend is picked once at import time from the environment
variable ``DOMAINFUSION_KERNELS``:

* ``auto`` (default) - use the numba backend when numba imports, else numpy
* ``numba``          - require the jitted backend
* ``numpy``          - force the pure-numpy fallback

``benchmarks/bench_kernels.py`` compares the two backends head to head.
"""

import os

_CHOICES = ("auto", "numba", "numpy")
_requested = os.environ.get("DOMAINFUSION_KERNELS", "auto").strip().lower()
if _requested not in _CHOICES:
    raise ImportError(
        f"DOMAINFUSION_KERNELS must be one of {_CHOICES}, got {_requested!r}"
    )

if _requested == "numpy":
    from . import numpy_impl as _impl
elif _requested == "numba":
    from . import numba_impl as _impl
else:
    try:
        from . import numba_impl as _impl
    except ImportError:
        from . import numpy_impl as _impl

BACKEND = _impl.BACKEND_NAME
msssim_components = _impl.msssim_components
jacobi_eigh = _impl.jacobi_eigh
resize_bilinear = _impl.resize_bilinear


def available_backends():
    """Importable backend modules, for tests and benchmarks."""
    from . import numpy_impl

    backends = [numpy_impl]
    try:
        from . import numba_impl

        backends.append(numba_impl)
    except ImportError:
        pass
    return backends
