"""Shared helpers for the test suite: random points, fields, displacements."""

import numpy as np

from mvmorph.manifolds import Circle, Euclidean, Product, Sphere, Spd


def random_point(m, rng, spread=1.0):
    """A random point on m, roughly ``spread`` away from a canonical base."""
    return perturb(m, base_point(m), rng, spread)


def base_point(m):
    if isinstance(m, Euclidean):
        return np.zeros(m.dim)
    if isinstance(m, Circle):
        return np.array([0.3])
    if isinstance(m, Sphere):
        p = np.zeros(m.point_dim)
        p[-1] = 1.0
        return p
    if isinstance(m, Spd):
        return np.eye(m.n).ravel()
    if isinstance(m, Product):
        return np.concatenate([base_point(f) for f, _ in m.factors])
    raise TypeError(m)


def random_tangent_coords(m, p, rng, scale=1.0):
    """Random tangent coordinates at p with norm about ``scale``."""
    if isinstance(m, Sphere):
        v = rng.standard_normal(m.point_dim)
        v -= np.dot(v, p) * p
        n = np.linalg.norm(v)
        return scale * v / n if n > 0 else v
    if isinstance(m, Spd):
        A = rng.standard_normal((m.n, m.n))
        S = 0.5 * (A + A.T)
        return scale * S.ravel() / np.linalg.norm(S)
    if isinstance(m, Product):
        parts = [
            random_tangent_coords(f, p[s], rng, scale=scale / np.sqrt(len(m.factors)))
            for (f, _), s in zip(m.factors, m._pslices)
        ]
        return np.concatenate(parts)
    v = rng.standard_normal(m.tangent_dim)
    n = np.linalg.norm(v)
    return scale * v / n if n > 0 else v


def perturb(m, p, rng, scale):
    return m._exp(np.asarray(p, float), random_tangent_coords(m, p, rng, scale))


def smooth_field(shape, rng, passes=4):
    """Smooth scalar field in [-1, 1] on the given grid shape."""
    f = rng.standard_normal(shape)
    for _ in range(passes):
        f = 0.25 * (
            np.roll(f, 1, axis=0)
            + np.roll(f, -1, axis=0)
            + np.roll(f, 1, axis=1)
            + np.roll(f, -1, axis=1)
        )
    mx = np.max(np.abs(f))
    return f / mx if mx > 0 else f


def random_image(m, n1, n2, rng, spread=0.3):
    """MvImage-like data array: smooth random field of points around a base."""
    base = base_point(m)
    data = np.empty((n1, n2, m.point_dim))
    dirs = [random_tangent_coords(m, base, rng, 1.0) for _ in range(2)]
    a = smooth_field((n1, n2), rng)
    b = smooth_field((n1, n2), rng)
    coeff = spread * (a[..., None] * dirs[0] + b[..., None] * dirs[1])
    data[:] = m._exp(np.broadcast_to(base, (n1, n2, m.point_dim)), coeff)
    return data


def random_displacement(n1, n2, rng, scale=0.3):
    """Valid staggered displacement with smooth interior values."""
    from mvmorph.staggered import Displacement

    v1 = scale * smooth_field((n1 - 1, n2), rng)
    v2 = scale * smooth_field((n1, n2 - 1), rng)
    v1[0, :] = 0.0
    v1[-1, :] = 0.0
    v2[:, 0] = 0.0
    v2[:, -1] = 0.0
    return Displacement(v1=v1, v2=v2)
