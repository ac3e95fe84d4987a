"""Kernel backend selection.

The SPD matrix kernels are the hot inner loops of the pipeline. When the
compiled extension ``mvmorph._spdkern`` is importable (built by setup.py when
Cython and a C compiler are present) it is used; otherwise the pure-NumPy
implementation takes over. Set ``MVMORPH_NO_ACCEL=1`` to force the fallback.

The compiled kernels handle matrix sizes up to 8; larger sizes silently route
to NumPy.
"""

import os

from . import _spdnp

_accel = None
if os.environ.get("MVMORPH_NO_ACCEL", "0") != "1":
    try:
        from . import _spdkern as _accel  # type: ignore[attr-defined]
    except ImportError:
        _accel = None

HAVE_ACCEL = _accel is not None
BACKEND_NAME = "cython" if HAVE_ACCEL else "numpy"

if HAVE_ACCEL:

    def spd_log(P, Q):
        if P.shape[-1] <= 8:
            return _accel.spd_log(P, Q)
        return _spdnp.spd_log(P, Q)

    def spd_exp(P, X):
        if P.shape[-1] <= 8:
            return _accel.spd_exp(P, X)
        return _spdnp.spd_exp(P, X)

    def spd_dist(P, Q):
        if P.shape[-1] <= 8:
            return _accel.spd_dist(P, Q)
        return _spdnp.spd_dist(P, Q)

    def spd_geopoint(P, Q, t):
        if P.shape[-1] <= 8:
            import numpy as np

            return _accel.spd_geopoint(P, Q, np.ascontiguousarray(t, dtype=float))
        return _spdnp.spd_geopoint(P, Q, t)

    def spd_inner(P, X, Y):
        if P.shape[-1] <= 8:
            return _accel.spd_inner(P, X, Y)
        return _spdnp.spd_inner(P, X, Y)

    def spd_karcher(pts, w, tol, maxiter):
        """Fused Karcher-mean loop; None outside the compiled path."""
        if pts.shape[-1] <= 8:
            return _accel.spd_karcher(pts, w, tol, maxiter)
        return None

else:
    spd_log = _spdnp.spd_log
    spd_exp = _spdnp.spd_exp
    spd_dist = _spdnp.spd_dist
    spd_geopoint = _spdnp.spd_geopoint
    spd_inner = _spdnp.spd_inner

    def spd_karcher(pts, w, tol, maxiter):
        return None
