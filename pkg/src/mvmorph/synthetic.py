"""Synthetic test pairs: translated blob, SPD(3) rectangle, SPD(2) whirl."""

import numpy as np

from .images import MvImage, bilinear_sample
from .manifolds import Euclidean, Spd
from .staggered import grid_coords

RECT_TENSOR = np.array(
    [[3.0, 2.0, 1.0], [2.0, 4.0, -1.0], [1.0, -1.0, 2.0]]
)


def blob_pair(n1=32, n2=32, shift=(2.0, 0.0), sigma=4.0):
    """Gray Gaussian blob and its translate."""
    m = Euclidean(1)
    X = grid_coords(n1, n2)
    c = np.array([(n1 + 1) / 2, (n2 + 1) / 2])

    def blob(center):
        r2 = (X[..., 0] - center[0]) ** 2 + (X[..., 1] - center[1]) ** 2
        return np.exp(-r2 / (2 * sigma**2))[..., None]

    return MvImage(m, blob(c)), MvImage(m, blob(c + np.asarray(shift)))


def spd3_rectangle_pair(n1=21, n2=33, shift=8):
    """SPD(3) images: a tensor rectangle over a 3I background, moved down.

    The rectangle holds A_T in the template and A_R = exp_{3I}(2 log_{3I} A_T)
    in the reference.
    """
    m = Spd(3)
    base = 3.0 * np.eye(3)
    a_t = RECT_TENSOR
    t = m.log(base.ravel(), a_t.ravel())
    a_r = m._exp(base.ravel(), 2.0 * t.coords)

    def image(tensor, row0):
        data = np.broadcast_to(base.ravel(), (n1, n2, 9)).copy()
        data[row0 : row0 + 6, 12:20] = tensor
        return MvImage(m, data)

    return image(a_t.ravel(), 3), image(a_r, 3 + shift)


def spd2_whirl_pair(n=64, theta0=0.9, power=1.4):
    """SPD(2) field with ring anisotropy; the reference is whirled and
    pushed away from the identity by a pointwise matrix power."""
    m = Spd(2)
    X = grid_coords(n, n)
    c = (n + 1) / 2.0
    dx = X[..., 0] - c
    dy = X[..., 1] - c
    r = np.hypot(dx, dy)

    beta = np.arctan2(dy, dx) + np.pi / 2
    ring = np.exp(-((r - n / 4.0) ** 2) / (2 * (n / 8.0) ** 2))
    lam1 = 1.0 + 1.2 * ring
    lam2 = np.full_like(lam1, 0.8)
    cb, sb = np.cos(beta), np.sin(beta)
    data = np.empty((n, n, 4))
    data[..., 0] = cb * cb * lam1 + sb * sb * lam2
    data[..., 1] = cb * sb * (lam1 - lam2)
    data[..., 2] = data[..., 1]
    data[..., 3] = sb * sb * lam1 + cb * cb * lam2
    start = MvImage(m, data)

    theta = theta0 * np.exp(-(r**2) / (2 * (n / 5.0) ** 2))
    ct, st = np.cos(theta), np.sin(theta)
    wx = c + ct * dx - st * dy
    wy = c + st * dx + ct * dy
    warped = bilinear_sample(start, np.stack([wx, wy], axis=-1)).reshape(-1, 4)

    ident = np.broadcast_to(np.eye(2).ravel(), warped.shape)
    logs = m._log(ident, warped)
    pushed = m._exp(ident, power * logs)
    return start, MvImage(m, pushed.reshape(n, n, 4))
