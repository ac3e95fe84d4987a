"""Optimal image sequences for a fixed deformation sequence.

Given deformations phi_1..phi_K between K+1 frames, the minimizing
intermediate images have a closed form: compose the grids psi_k backwards
from the identity, weight each pixel by |det D psi_k|, reparametrize the
times t_k from the inverse weights, evaluate the per-pixel geodesics from
T(psi_0(x)) to R(x), and push the values at the scattered points psi_k(x)
back onto the pixel grid.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDeformationError, InvalidArgumentError
from .images import bilinear_sample, interp_grid_field, scattered_interp
from .staggered import det2, forward_jacobian, grid_coords, p_field

WEIGHT_FLOOR = 1e-6


@dataclass
class DeformationSequence:
    """Node-centered deformations phi_k = id - Pv_k, k = 1..K."""

    phis: list

    def __post_init__(self):
        if len(self.phis) < 2:
            raise InvalidArgumentError("a deformation sequence needs K >= 2")
        self.phis = [np.asarray(p, dtype=np.float64) for p in self.phis]
        shape = self.phis[0].shape
        if any(p.shape != shape for p in self.phis):
            raise InvalidArgumentError("deformation shapes differ")

    @property
    def K(self):
        return len(self.phis)

    @property
    def shape(self):
        return self.phis[0].shape[:2]

    @classmethod
    def from_displacements(cls, displacements):
        return cls([phi_from_displacement(v) for v in displacements])


def phi_from_displacement(v):
    """The node-centered map phi = id - Pv."""
    n1, n2 = v.shape
    return grid_coords(n1, n2) - p_field(v)


@dataclass
class PathTimes:
    """Per-pixel weights w_1..w_K and reparametrized times t_1..t_{K-1}."""

    w: np.ndarray
    t: np.ndarray
    floored: int = 0


def compose_psi(seq):
    """Composed grids psi_k, k = 0..K, with psi_K the identity.

    psi_k(x) = psi_{k+1}(x) - (P v_{k+1})(psi_{k+1}(x)), the displacement
    field being interpolated componentwise on R^2. Raises
    DegenerateDeformationError when any psi_k leaves the image domain by
    more than one pixel.
    """
    n1, n2 = seq.shape
    K = seq.K
    X = grid_coords(n1, n2)
    psis = np.empty((K + 1, n1, n2, 2))
    psis[K] = X
    lo = np.array([0.5 - 1.0, 0.5 - 1.0])
    hi = np.array([n1 + 0.5 + 1.0, n2 + 0.5 + 1.0])
    for k in range(K - 1, -1, -1):
        U = X - seq.phis[k]  # Pv_{k+1} on the grid (phis is 0-indexed)
        shift = interp_grid_field(U, psis[k + 1])
        psis[k] = psis[k + 1] - shift
        if np.any(psis[k] < lo) or np.any(psis[k] > hi):
            raise DegenerateDeformationError(
                f"psi_{k} leaves the domain by more than one pixel"
            )
    return psis


def path_weights(seq, psis):
    """Pixel weights w_k = |det D psi_k| via the chain rule, k = 1..K.

    Jacobians of each phi_k are taken by forward differences on the grid and
    bilinearly interpolated at psi_k(x); the chain is accumulated backwards
    from D psi_K = I. Weights are floored at WEIGHT_FLOOR; the number of
    floored entries is reported alongside.
    """
    n1, n2 = seq.shape
    K = seq.K
    jacs = [forward_jacobian(p).reshape(n1, n2, 4) for p in seq.phis]
    w = np.empty((K, n1, n2))
    w[K - 1] = 1.0  # psi_K is the identity
    D = np.broadcast_to(np.eye(2), (n1 * n2, 2, 2)).copy()
    for k in range(K - 1, 0, -1):
        A = interp_grid_field(jacs[k], psis[k + 1].reshape(-1, 2))
        D = np.einsum("nij,njk->nik", A.reshape(-1, 2, 2), D)
        w[k - 1] = np.abs(det2(D)).reshape(n1, n2)
    floored = int(np.count_nonzero(w < WEIGHT_FLOOR))
    if floored:
        w = np.maximum(w, WEIGHT_FLOOR)
    return w, floored


def path_times(w):
    """Times t_k = (sum_{i<=k} 1/w_i) / (sum_{i<=K} 1/w_i), k = 1..K-1."""
    w = np.asarray(w, dtype=np.float64)
    if np.any(w <= 0):
        raise InvalidArgumentError("path weights must be positive")
    c = np.cumsum(1.0 / w, axis=0)
    return c[:-1] / c[-1]


def optimal_images_info(T, R, seq):
    """Optimal intermediates plus the PathTimes diagnostics."""
    if T.shape != R.shape or T.manifold.point_dim != R.manifold.point_dim:
        raise InvalidArgumentError("endpoint images are incompatible")
    if seq.shape != T.shape:
        raise InvalidArgumentError("deformations do not match the images")
    m = T.manifold
    n1, n2 = T.shape
    K = seq.K

    psis = compose_psi(seq)
    w, floored = path_weights(seq, psis)
    t = path_times(w)
    pt = PathTimes(w=w, t=t, floored=floored)

    F0 = bilinear_sample(T, psis[0].reshape(-1, 2))
    Rflat = R.data.reshape(-1, m.point_dim)

    lo = np.array([0.5, 0.5])
    hi = np.array([n1 + 0.5, n2 + 0.5])
    images = []
    for k in range(1, K):
        Fk = m._geopoint(F0, Rflat, t[k - 1].reshape(-1))
        sites = np.clip(psis[k].reshape(-1, 2), lo, hi)
        images.append(scattered_interp(m, sites, Fk, (n1, n2)))
    return images, pt


def optimal_images(T, R, seq):
    """The unique optimal intermediate images I_1..I_{K-1}.

    Endpoints are never modified; they remain T and R.
    """
    images, _ = optimal_images_info(T, R, seq)
    return images
