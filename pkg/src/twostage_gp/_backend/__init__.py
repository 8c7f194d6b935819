"""Backend selection for the numerical core.

The compiled Cython extension is preferred when it imports cleanly;
otherwise the pure-numpy implementation is used. Set the environment
variable ``TWOSTAGE_GP_BACKEND`` to ``compiled`` or ``numpy`` to force
one (forcing ``compiled`` raises if the extension is unavailable).
"""

import os

from . import numpy_impl

_requested = os.environ.get("TWOSTAGE_GP_BACKEND", "auto").lower()

if _requested not in ("auto", "compiled", "numpy"):
    raise ValueError(
        f"TWOSTAGE_GP_BACKEND must be auto, compiled or numpy, got {_requested!r}"
    )

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "compiled backend requested but the twostage_gp._backend._core "
                "extension is not built; run pip install . or set "
                "TWOSTAGE_GP_BACKEND=numpy"
            ) from None
if _impl is None:
    _impl = numpy_impl

BACKEND_NAME = _impl.NAME

RBF = numpy_impl.RBF
MATERN32 = numpy_impl.MATERN32
MATERN12 = numpy_impl.MATERN12

base_matrix = _impl.base_matrix
base_and_dl = _impl.base_and_dl
fps = _impl.fps


def available_backends():
    """Names of the backends importable in this environment."""
    names = ["numpy"]
    try:
        from . import _core  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_impl(name):
    """Fetch a backend module by name (used by tests and benchmarks)."""
    if name == "numpy":
        return numpy_impl
    if name == "compiled":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
