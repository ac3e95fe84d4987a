"""Riemannian manifolds used by the morphing pipeline.

Provides Euclidean space, the circle of angles, spheres, symmetric positive
definite matrices with the affine-invariant metric, and weighted products of
those. Points and tangent coordinates are plain float64 arrays whose last
axis is the storage dimension; every operation broadcasts over leading axes,
so whole pixel grids go through the same code path as single points.

Conventions:

* circle: one angle in (-pi, pi]
* sphere(d): d+1 ambient coordinates of unit Euclidean norm
* spd(n): n*n row-major entries of a symmetric positive definite matrix;
  tangents are symmetric matrices in the same storage
* product: concatenation of the factor storages, squared distances combined
  with strictly positive weights
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ConvergenceError, CutLocusError, InvalidArgumentError

KARCHER_TOL = 1e-10
KARCHER_MAX_ITER = 100
MEMBERSHIP_TOL = 1e-10
_BASE_ATOL = 1e-8


@dataclass(frozen=True)
class Tangent:
    """A tangent vector (or a stack of them) anchored at its base point."""

    base: np.ndarray
    coords: np.ndarray


def _check_dim(name, arr, dim):
    if arr.shape[-1] != dim:
        raise InvalidArgumentError(
            f"{name} has storage size {arr.shape[-1]}, expected {dim}"
        )


class Manifold:
    """Base class; subclasses fill in the vectorized kernels."""

    point_dim: int
    tangent_dim: int

    # -- public, argument-checked operations ------------------------------

    def dist(self, p, q):
        """Geodesic distance between points (broadcasts over leading axes)."""
        p, q = self._as_points(p, q)
        return self._dist(p, q)

    def log(self, p, q):
        """Tangent at p pointing to q, with exp(p, log(p, q)) == q."""
        p, q = self._as_points(p, q)
        return Tangent(base=p, coords=self._log(p, q))

    def exp(self, p, v):
        """Geodesic endpoint reached from p along the tangent v."""
        p = self._as_point(p)
        self._check_based(p, v)
        return self._exp(p, np.asarray(v.coords, dtype=np.float64))

    def geopoint(self, p, q, t):
        """Point gamma(t) on the geodesic from p (t=0) to q (t=1)."""
        p, q = self._as_points(p, q)
        return self._geopoint(p, q, np.asarray(t, dtype=np.float64))

    def inner(self, p, u, v):
        """Riemannian inner product of two tangents based at p."""
        p = self._as_point(p)
        self._check_based(p, u)
        self._check_based(p, v)
        return self._inner(
            p,
            np.asarray(u.coords, dtype=np.float64),
            np.asarray(v.coords, dtype=np.float64),
        )

    def norm(self, p, v):
        return np.sqrt(self.inner(p, v, v))

    def karcher_mean(self, points, weights, tol=KARCHER_TOL,
                     max_iter=KARCHER_MAX_ITER):
        """Weighted Karcher mean of a list of points.

        Fixed-point iteration f <- exp_f(mean of logs); closed forms for
        Euclidean space and for at most two positive weights. Raises
        ConvergenceError (carrying the last iterate) if the iteration does
        not reach ``tol`` within ``max_iter`` steps.
        """
        pts = np.asarray(points, dtype=np.float64)
        w = np.asarray(weights, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] != w.shape[0]:
            raise InvalidArgumentError("points and weights lengths differ")
        _check_dim("points", pts, self.point_dim)
        if np.any(w < 0):
            raise InvalidArgumentError("weights must be nonnegative")
        if not np.any(w > 0):
            raise InvalidArgumentError("at least one weight must be positive")

        pos = np.flatnonzero(w > 0)
        if pos.size == 1:
            return pts[pos[0]].copy()
        if pos.size == 2:
            i, j = pos
            return self._geopoint(pts[i], pts[j], w[j] / (w[i] + w[j]))
        if isinstance(self, Euclidean):
            return (w / w.sum()) @ pts
        return karcher_mean_many(self, pts[None], w[None],
                                 tol=tol, max_iter=max_iter)[0]

    def check_point(self, p, tol=MEMBERSHIP_TOL):
        """Raise InvalidArgumentError unless p satisfies membership."""
        p = self._as_point(p)
        bad = ~self._member_mask(p, tol)
        if np.any(bad):
            raise InvalidArgumentError(
                f"{np.count_nonzero(bad)} point(s) violate membership of {self}"
            )

    def is_point(self, p, tol=MEMBERSHIP_TOL):
        return bool(np.all(self._member_mask(self._as_point(p), tol)))

    # -- helpers -----------------------------------------------------------

    def _as_point(self, p):
        p = np.asarray(p, dtype=np.float64)
        _check_dim("point", p, self.point_dim)
        return p

    def _as_points(self, p, q):
        return self._as_point(p), self._as_point(q)

    def _check_based(self, p, v):
        if not isinstance(v, Tangent):
            raise InvalidArgumentError("expected a Tangent")
        base = np.asarray(v.base, dtype=np.float64)
        try:
            ok = np.allclose(base, p, rtol=0.0, atol=_BASE_ATOL)
        except ValueError:
            ok = False
        if not ok:
            raise InvalidArgumentError("tangent is based at a different point")
        _check_dim("tangent", np.asarray(v.coords), self.tangent_dim)

    def _geopoint(self, p, q, t):
        t = np.asarray(t, dtype=np.float64)
        out = self._exp(p, t[..., None] * self._log(p, q))
        out = np.where((t == 0.0)[..., None], np.broadcast_to(p, out.shape), out)
        out = np.where((t == 1.0)[..., None], np.broadcast_to(q, out.shape), out)
        return out

    # -- kernels supplied by subclasses ------------------------------------

    def _dist(self, p, q):
        raise NotImplementedError

    def _log(self, p, q):
        raise NotImplementedError

    def _exp(self, p, c):
        raise NotImplementedError

    def _inner(self, p, a, b):
        raise NotImplementedError

    def _member_mask(self, p, tol):
        raise NotImplementedError


class Euclidean(Manifold):
    """Flat R^d with the standard inner product."""

    def __init__(self, dim):
        if dim < 1:
            raise InvalidArgumentError("dimension must be positive")
        self.dim = dim
        self.point_dim = dim
        self.tangent_dim = dim

    def __repr__(self):
        return f"Euclidean({self.dim})"

    def _dist(self, p, q):
        return np.linalg.norm(q - p, axis=-1)

    def _log(self, p, q):
        return q - p

    def _exp(self, p, c):
        return p + c

    def _inner(self, p, a, b):
        return np.sum(a * b, axis=-1)

    def _member_mask(self, p, tol):
        return np.all(np.isfinite(p), axis=-1)


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]."""
    w = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


class Circle(Manifold):
    """Unit circle represented by one angle in (-pi, pi]."""

    point_dim = 1
    tangent_dim = 1

    def __repr__(self):
        return "Circle()"

    def _delta(self, p, q):
        d = wrap_angle(q - p)
        if np.any(d == np.pi):
            raise CutLocusError("antipodal angles: logarithm is ambiguous")
        return d

    def _dist(self, p, q):
        return np.abs(wrap_angle(q - p))[..., 0]

    def _log(self, p, q):
        return self._delta(p, q)

    def _exp(self, p, c):
        out = wrap_angle(p + c)
        zero = np.all(c == 0.0, axis=-1)
        return np.where(zero[..., None], p, out)

    def _inner(self, p, a, b):
        return np.sum(a * b, axis=-1)

    def _member_mask(self, p, tol):
        a = p[..., 0]
        return (a > -np.pi - tol) & (a <= np.pi + tol) & np.isfinite(a)


class Sphere(Manifold):
    """Unit sphere S^d embedded in R^{d+1}; tangents stored in ambient."""

    def __init__(self, dim=2):
        if dim < 1:
            raise InvalidArgumentError("dimension must be positive")
        self.dim = dim
        self.point_dim = dim + 1
        self.tangent_dim = dim + 1

    def __repr__(self):
        return f"Sphere({self.dim})"

    def _dist(self, p, q):
        dot = np.clip(np.sum(p * q, axis=-1), -1.0, 1.0)
        return np.arccos(dot)

    def _log(self, p, q):
        dot = np.clip(np.sum(p * q, axis=-1), -1.0, 1.0)
        if np.any(1.0 + dot <= 1e-12):
            raise CutLocusError("antipodal sphere points: logarithm undefined")
        theta = np.arccos(dot)
        u = q - dot[..., None] * p
        nu = np.linalg.norm(u, axis=-1)
        scale = np.where(nu > 0.0, theta / np.where(nu > 0.0, nu, 1.0), 0.0)
        return scale[..., None] * u

    def _exp(self, p, c):
        nv = np.linalg.norm(c, axis=-1)
        pos = nv > 0.0
        safe = np.where(pos, nv, 1.0)
        out = np.cos(nv)[..., None] * p + (np.sin(nv) / safe)[..., None] * c
        out = out / np.linalg.norm(out, axis=-1, keepdims=True)
        return np.where(pos[..., None], out, np.broadcast_to(p, out.shape))

    def _inner(self, p, a, b):
        return np.sum(a * b, axis=-1)

    def _member_mask(self, p, tol):
        return np.abs(np.linalg.norm(p, axis=-1) - 1.0) <= tol


class Spd(Manifold):
    """Symmetric positive definite n x n matrices, affine-invariant metric.

    Storage is the row-major flattening; the heavy matrix kernels live in
    :mod:`mvmorph.backend`.
    """

    def __init__(self, n):
        if n < 1:
            raise InvalidArgumentError("matrix size must be positive")
        self.n = n
        self.point_dim = n * n
        self.tangent_dim = n * n

    def __repr__(self):
        return f"Spd({self.n})"

    def _mats(self, *arrs):
        """Broadcast storage arrays and reshape to contiguous (N, n, n)."""
        arrs = np.broadcast_arrays(*arrs)
        lead = arrs[0].shape[:-1]
        mats = [
            np.ascontiguousarray(a.reshape((-1, self.n, self.n))) for a in arrs
        ]
        return lead, mats

    def _dist(self, p, q):
        lead, (P, Q) = self._mats(p, q)
        return backend.spd_dist(P, Q).reshape(lead)

    def _log(self, p, q):
        lead, (P, Q) = self._mats(p, q)
        return backend.spd_log(P, Q).reshape(lead + (self.point_dim,))

    def _exp(self, p, c):
        lead, (P, C) = self._mats(p, c)
        return backend.spd_exp(P, C).reshape(lead + (self.point_dim,))

    def _geopoint(self, p, q, t):
        t = np.asarray(t, dtype=np.float64)
        shape = np.broadcast_shapes(p.shape[:-1], q.shape[:-1], t.shape)
        lead, (P, Q) = self._mats(
            np.broadcast_to(p, shape + (self.point_dim,)),
            np.broadcast_to(q, shape + (self.point_dim,)),
        )
        tt = np.ascontiguousarray(np.broadcast_to(t, shape).reshape(-1))
        return backend.spd_geopoint(P, Q, tt).reshape(lead + (self.point_dim,))

    def _inner(self, p, a, b):
        lead, (P, A, B) = self._mats(p, a, b)
        return backend.spd_inner(P, A, B).reshape(lead)

    def _member_mask(self, p, tol):
        lead = p.shape[:-1]
        M = p.reshape(lead + (self.n, self.n))
        sym = np.all(
            np.abs(M - np.swapaxes(M, -1, -2)) <= tol, axis=(-2, -1)
        )
        evs = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
        return sym & (evs[..., 0] > 0.0) & np.all(np.isfinite(p), axis=-1)


class Product(Manifold):
    """Weighted product of manifolds; storages are concatenated."""

    def __init__(self, factors):
        factors = tuple((m, float(w)) for m, w in factors)
        if not factors:
            raise InvalidArgumentError("a product needs at least one factor")
        if any(w <= 0 for _, w in factors):
            raise InvalidArgumentError("product weights must be positive")
        self.factors = factors
        self.point_dim = sum(m.point_dim for m, _ in factors)
        self.tangent_dim = sum(m.tangent_dim for m, _ in factors)
        self._pslices = self._slices([m.point_dim for m, _ in factors])
        self._tslices = self._slices([m.tangent_dim for m, _ in factors])

    @staticmethod
    def _slices(dims):
        out, start = [], 0
        for d in dims:
            out.append(slice(start, start + d))
            start += d
        return out

    def __repr__(self):
        inner = ", ".join(f"({m!r}, {w})" for m, w in self.factors)
        return f"Product([{inner}])"

    def _dist(self, p, q):
        acc = 0.0
        for (m, w), s in zip(self.factors, self._pslices):
            acc = acc + w * m._dist(p[..., s], q[..., s]) ** 2
        return np.sqrt(acc)

    def _log(self, p, q):
        parts = [
            m._log(p[..., s], q[..., s])
            for (m, _), s in zip(self.factors, self._pslices)
        ]
        return np.concatenate(parts, axis=-1)

    def _exp(self, p, c):
        parts = [
            m._exp(p[..., ps], c[..., ts])
            for (m, _), ps, ts in zip(self.factors, self._pslices, self._tslices)
        ]
        return np.concatenate(parts, axis=-1)

    def _geopoint(self, p, q, t):
        parts = [
            m._geopoint(p[..., s], q[..., s], t)
            for (m, _), s in zip(self.factors, self._pslices)
        ]
        return np.concatenate(parts, axis=-1)

    def _inner(self, p, a, b):
        acc = 0.0
        for (m, w), ps, ts in zip(self.factors, self._pslices, self._tslices):
            acc = acc + w * m._inner(p[..., ps], a[..., ts], b[..., ts])
        return acc

    def _member_mask(self, p, tol):
        mask = True
        for (m, _), s in zip(self.factors, self._pslices):
            mask = mask & m._member_mask(p[..., s], tol)
        return mask


def karcher_mean_many(manifold, points, weights, tol=KARCHER_TOL,
                      max_iter=KARCHER_MAX_ITER):
    """Row-wise weighted Karcher means.

    ``points`` has shape (..., k, point_dim) and ``weights`` (..., k); one
    mean per leading index is returned. Rows are initialized at their
    largest-weight point and frozen as soon as the mean-tangent norm drops
    below ``tol``, so degenerate rows (a single positive weight) return the
    stored point bit-exactly.
    """
    pts = np.asarray(points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    wsum = w.sum(axis=-1)
    if np.any(wsum <= 0):
        raise InvalidArgumentError("each row needs a positive total weight")
    wn = w / wsum[..., None]

    if isinstance(manifold, Euclidean):
        return np.einsum("...k,...kd->...d", wn, pts)

    if isinstance(manifold, Spd):
        n = manifold.n
        lead = pts.shape[:-2]
        k = pts.shape[-2]
        mats = np.ascontiguousarray(pts.reshape((-1, k, n, n)))
        wr = np.ascontiguousarray(w.reshape(-1, k))
        fused = backend.spd_karcher(mats, wr, tol, max_iter)
        if fused is not None:
            mean, failed = fused
            mean = mean.reshape(lead + (manifold.point_dim,))
            if failed:
                raise ConvergenceError(
                    f"Karcher mean did not converge on {failed} row(s)",
                    last_iterate=mean,
                )
            return mean

    idx = np.argmax(wn, axis=-1)
    f = np.take_along_axis(pts, idx[..., None, None], axis=-2)[..., 0, :].copy()

    for step in range(max_iter + 1):
        logs = manifold._log(f[..., None, :], pts)
        mean = np.einsum("...k,...kd->...d", wn, logs)
        nrm2 = manifold._inner(f, mean, mean)
        active = nrm2 > tol * tol
        if not np.any(active):
            return f
        if step == max_iter:
            break
        f_new = manifold._exp(f, mean)
        f = np.where(active[..., None], f_new, f)
    raise ConvergenceError(
        "Karcher mean did not converge", last_iterate=f
    )
