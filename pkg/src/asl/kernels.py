"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when
``ASL_PURE_PYTHON=1`` is set, the numpy versions are used.
"""

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("ASL_PURE_PYTHON", "") not in ("1", "true"):
    BACKEND = "compiled"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _kernels_py

edt_sq = _impl.edt_sq
block_oscillation = _impl.block_oscillation
bilinear_sample = _impl.bilinear_sample
nearest_cubes = _impl.nearest_cubes


def get_backend(name=None):
    """Return the kernel module for ``name`` ('compiled' or 'python')."""
    if name is None:
        name = BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None
