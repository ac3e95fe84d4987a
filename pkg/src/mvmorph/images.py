"""Manifold-valued raster operations.

Images are rasters of manifold points at the pixel centers G = {1..n1} x
{1..n2} inside the domain [1/2, n1+1/2] x [1/2, n2+1/2]. Sample queries are
clamped to the pixel-center hull [1, n1] x [1, n2]; sub-pixel overshoot
during line searches therefore degrades gracefully at the boundary.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import InvalidArgumentError
from .manifolds import Euclidean, Manifold, Tangent, karcher_mean_many


@dataclass
class MvImage:
    """A raster of manifold points, data shape (n1, n2, point_dim)."""

    manifold: Manifold
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[-1] != self.manifold.point_dim:
            raise InvalidArgumentError(
                f"image data shape {self.data.shape} does not match "
                f"{self.manifold!r}"
            )

    @property
    def n1(self):
        return self.data.shape[0]

    @property
    def n2(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape[:2]

    @classmethod
    def constant(cls, manifold, n1, n2, point):
        data = np.broadcast_to(
            np.asarray(point, dtype=np.float64), (n1, n2, manifold.point_dim)
        ).copy()
        return cls(manifold, data)

    def validate(self, tol=1e-10):
        self.manifold.check_point(self.data, tol=tol)
        return self


def _clamped_cell(img, q):
    """Clamp queries and split into lower pixel index and cell fraction."""
    x1 = np.clip(q[:, 0], 1.0, float(img.n1))
    x2 = np.clip(q[:, 1], 1.0, float(img.n2))
    i0 = np.clip(np.floor(x1).astype(np.intp), 1, img.n1 - 1)
    j0 = np.clip(np.floor(x2).astype(np.intp), 1, img.n2 - 1)
    a = x1 - i0
    b = x2 - j0
    return i0 - 1, j0 - 1, a, b


def _sample_flat(img, q):
    """Karcher bilinear interpolation at queries q of shape (N, 2)."""
    m = img.manifold
    i0, j0, a, b = _clamped_cell(img, q)
    d = img.data
    out = np.empty((q.shape[0], m.point_dim))

    a_edge = (a == 0.0) | (a == 1.0)
    b_edge = (b == 0.0) | (b == 1.0)

    corner = a_edge & b_edge
    if np.any(corner):
        ii = i0[corner] + (a[corner] == 1.0)
        jj = j0[corner] + (b[corner] == 1.0)
        out[corner] = d[ii, jj]

    row = a_edge & ~b_edge  # interpolate along x2 between two pixels
    if np.any(row):
        ii = i0[row] + (a[row] == 1.0)
        out[row] = m._geopoint(d[ii, j0[row]], d[ii, j0[row] + 1], b[row])

    col = b_edge & ~a_edge
    if np.any(col):
        jj = j0[col] + (b[col] == 1.0)
        out[col] = m._geopoint(d[i0[col], jj], d[i0[col] + 1, jj], a[col])

    gen = ~(a_edge | b_edge)
    if np.any(gen):
        ii, jj = i0[gen], j0[gen]
        aa, bb = a[gen, None], b[gen, None]
        pts = np.stack(
            [d[ii, jj], d[ii, jj + 1], d[ii + 1, jj], d[ii + 1, jj + 1]], axis=1
        )
        w = np.concatenate(
            [(1 - aa) * (1 - bb), (1 - aa) * bb, aa * (1 - bb), aa * bb], axis=1
        )
        out[gen] = karcher_mean_many(m, pts, w)
    return out


def bilinear_sample(img, x):
    """Karcher bilinear sample of the image at x (broadcasts over (..., 2)).

    Exact at pixel centers, reduces to a two-point geodesic on cell edges,
    and equals classical bilinear interpolation for Euclidean images.
    """
    q = np.asarray(x, dtype=np.float64)
    single = q.ndim == 1
    flat = np.ascontiguousarray(q.reshape(-1, 2))
    out = _sample_flat(img, flat)
    if single:
        return out[0]
    return out.reshape(q.shape[:-1] + (img.manifold.point_dim,))


def _strict_ceil(x):
    """Smallest integer strictly larger than x."""
    f = np.floor(x)
    return np.where(x == f, f + 1.0, np.ceil(x))


def sample_with_gradient(img, q):
    """Sampled points plus forward-difference image gradients at q (N, 2).

    The gradient along x1 is log_{T(x)} T((c, x2)) / (c - x1) with c the
    smallest integer strictly above x1, and analogously along x2; at the far
    boundary the clamped sample repeats and the gradient vanishes, matching
    the clamped objective.
    """
    m = img.manifold
    base = _sample_flat(img, q)
    x1 = np.clip(q[:, 0], 1.0, float(img.n1))
    x2 = np.clip(q[:, 1], 1.0, float(img.n2))

    c1 = _strict_ceil(x1)
    t1 = _sample_flat(img, np.stack([c1, x2], axis=-1))
    g1 = m._log(base, t1) / (c1 - x1)[:, None]

    c2 = _strict_ceil(x2)
    t2 = _sample_flat(img, np.stack([x1, c2], axis=-1))
    g2 = m._log(base, t2) / (c2 - x2)[:, None]
    return base, g1, g2


def image_gradient(img, x):
    """Pair of tangents (d/dx1, d/dx2) based at bilinear_sample(img, x)."""
    q = np.asarray(x, dtype=np.float64)
    single = q.ndim == 1
    flat = np.ascontiguousarray(q.reshape(-1, 2))
    base, g1, g2 = sample_with_gradient(img, flat)
    if single:
        base, g1, g2 = base[0], g1[0], g2[0]
    else:
        pd = img.manifold.point_dim
        base = base.reshape(q.shape[:-1] + (pd,))
        g1 = g1.reshape(q.shape[:-1] + (pd,))
        g2 = g2.reshape(q.shape[:-1] + (pd,))
    return (
        Tangent(base=base, coords=g1),
        Tangent(base=base, coords=g2),
    )


def scattered_values(manifold, sites, values, queries):
    """Linear scattered-data interpolation of manifold values.

    Queries inside the convex hull get the Karcher mean of the enclosing
    Delaunay triangle's values with barycentric weights; queries outside get
    the nearest site's value.
    """
    sites = np.asarray(sites, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if sites.ndim != 2 or sites.shape[1] != 2 or sites.shape[0] < 3:
        raise InvalidArgumentError("need at least three 2-D sites")
    if sites.shape[0] != values.shape[0]:
        raise InvalidArgumentError("sites and values lengths differ")
    try:
        tri = Delaunay(sites)
    except QhullError as exc:
        raise InvalidArgumentError(f"degenerate site set: {exc}") from exc
    if tri.simplices.shape[0] == 0:
        raise InvalidArgumentError("degenerate site set: no triangles")

    simplex = tri.find_simplex(queries)
    inside = simplex >= 0
    out = np.empty((queries.shape[0], manifold.point_dim))

    if np.any(inside):
        s = simplex[inside]
        X = tri.transform[s, :2]
        Y = queries[inside] - tri.transform[s, 2]
        b2 = np.einsum("qij,qj->qi", X, Y)
        bary = np.concatenate([b2, 1.0 - b2.sum(axis=1, keepdims=True)], axis=1)
        bary = np.clip(bary, 0.0, None)
        verts = tri.simplices[s]
        out[inside] = karcher_mean_many(manifold, values[verts], bary)
    if np.any(~inside):
        _, nearest = cKDTree(sites).query(queries[~inside])
        out[~inside] = values[nearest]
    return out


def scattered_interp(manifold, sites, values, grid_shape):
    """scattered_values evaluated on the full pixel grid, as an MvImage."""
    from .staggered import grid_coords

    n1, n2 = grid_shape
    q = grid_coords(n1, n2).reshape(-1, 2)
    vals = scattered_values(manifold, sites, values, q)
    return MvImage(manifold, vals.reshape(n1, n2, manifold.point_dim))


def interp_grid_field(field, q):
    """Classical (componentwise) bilinear interpolation of a node field.

    ``field`` has shape (n1, n2, C) on the pixel grid; queries are clamped to
    the pixel-center hull.
    """
    field = np.asarray(field, dtype=np.float64)
    n1, n2 = field.shape[:2]
    qq = np.asarray(q, dtype=np.float64)
    flat = qq.reshape(-1, 2)
    x1 = np.clip(flat[:, 0], 1.0, float(n1))
    x2 = np.clip(flat[:, 1], 1.0, float(n2))
    i0 = np.clip(np.floor(x1).astype(np.intp), 1, n1 - 1)
    j0 = np.clip(np.floor(x2).astype(np.intp), 1, n2 - 1)
    a = (x1 - i0)[:, None]
    b = (x2 - j0)[:, None]
    i0 -= 1
    j0 -= 1
    out = (
        (1 - a) * (1 - b) * field[i0, j0]
        + (1 - a) * b * field[i0, j0 + 1]
        + a * (1 - b) * field[i0 + 1, j0]
        + a * b * field[i0 + 1, j0 + 1]
    )
    return out.reshape(qq.shape[:-1] + (field.shape[-1],))


def gaussian_weights(sigma, radius):
    """Truncated Gaussian taps on the offsets -radius..radius."""
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (t / max(sigma, 1e-12)) ** 2)
    return w / w.sum()


def smooth_downsample(img, factor, kernel_sigma=1.0):
    """Truncated-Gaussian Karcher smoothing followed by bilinear decimation.

    The per-pixel smoothing is a weighted Karcher mean over the (2r+1)^2
    window with r = round(2 sigma); taps falling outside the raster are
    dropped and the remaining weights renormalized. The smoothed image is
    then sampled at the coarse pixel centers mapped into the fine domain.
    """
    if not 0.0 < factor <= 1.0:
        raise InvalidArgumentError("downsampling factor must be in (0, 1]")
    n1, n2 = img.shape
    m1 = int(round(n1 * factor))
    m2 = int(round(n2 * factor))
    if m1 < 4 or m2 < 4:
        raise InvalidArgumentError(
            f"downsampled size {m1}x{m2} is below the 4-pixel minimum"
        )

    r = int(round(2.0 * kernel_sigma))
    if r > 0:
        sm = MvImage(img.manifold, _gauss_smooth(img, kernel_sigma, r))
    else:
        sm = img

    i = np.arange(1.0, m1 + 1.0)
    j = np.arange(1.0, m2 + 1.0)
    x1 = 0.5 + (i - 0.5) * (n1 / m1)
    x2 = 0.5 + (j - 0.5) * (n2 / m2)
    q = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
    return MvImage(img.manifold, bilinear_sample(sm, q))


def _gauss_smooth(img, sigma, radius):
    n1, n2 = img.shape
    m = img.manifold
    w1d = gaussian_weights(sigma, radius)
    offs = range(-radius, radius + 1)
    k = (2 * radius + 1) ** 2
    ii = np.arange(n1)[:, None]
    jj = np.arange(n2)[None, :]
    pts = np.empty((n1, n2, k, m.point_dim))
    wts = np.empty((n1, n2, k))
    idx = 0
    for di in offs:
        for dj in offs:
            ri = ii + di
            rj = jj + dj
            valid = (ri >= 0) & (ri < n1) & (rj >= 0) & (rj < n2)
            ci = np.clip(ri, 0, n1 - 1)
            cj = np.clip(rj, 0, n2 - 1)
            pts[:, :, idx, :] = img.data[ci, cj]
            wts[:, :, idx] = np.where(
                valid, w1d[di + radius] * w1d[dj + radius], 0.0
            )
            idx += 1
    return karcher_mean_many(m, pts, wts)
