"""Hot selection kernels with a compiled backend and a NumPy fallback.

The compiled module is used when it imports; set ``POOLAL_KERNELS=python`` to
force the fallback. Both backends share one contract:

``min_sqdist(x, centers)``
    squared Euclidean distance from every row of ``x`` to its nearest center.
``kcenter_greedy(x, min_sq, k)``
    farthest-point picks; ``min_sq`` is consumed in place and picked rows are
    marked with -1. Ties go to the lowest row.
``kmeanspp_seed(x, k, uniforms)``
    D^2 seeding driven by pre-drawn uniforms in [0, 1); the first pick and any
    pick made when every remaining distance is zero are uniform over the
    unpicked rows.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("POOLAL_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def min_sqdist(x, centers, impl=None):
    impl = impl or _impl
    return impl.min_sqdist(_c(x), _c(np.atleast_2d(centers)))


def kcenter_greedy(x, min_sq, k, impl=None):
    impl = impl or _impl
    min_sq = np.array(min_sq, dtype=np.float64)
    k = min(int(k), x.shape[0])
    return impl.kcenter_greedy(_c(x), min_sq, k)


def kmeanspp_seed(x, k, uniforms, impl=None):
    impl = impl or _impl
    k = min(int(k), x.shape[0])
    u = np.ascontiguousarray(uniforms, dtype=np.float64)
    if u.shape[0] < k:
        raise ValueError("need one uniform per pick")
    return impl.kmeanspp_seed(_c(x), k, u)


def backends():
    """Available implementations keyed by name (for benchmarks and tests)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
