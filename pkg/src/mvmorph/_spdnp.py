"""NumPy fallback kernels for the affine-invariant SPD geometry.

All functions operate on stacks of symmetric matrices with shape (N, n, n),
float64. The compiled extension ``mvmorph._spdkern`` exposes the same
signatures; :mod:`mvmorph.backend` picks whichever is importable.

Eigenvalues are clamped below at ``EIG_FLOOR`` before logarithms and inverse
square roots so that pixels at the cone boundary stay finite.
"""

import numpy as np

EIG_FLOOR = 1e-12


def _eigh2(A):
    """Closed-form eigendecomposition of symmetric 2x2 stacks (ascending)."""
    a = A[:, 0, 0]
    b = 0.5 * (A[:, 0, 1] + A[:, 1, 0])
    c = A[:, 1, 1]
    mid = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    vals = np.stack([mid - disc, mid + disc], axis=-1)

    # eigenvector of the larger eigenvalue
    v2x = np.where(b != 0.0, b, np.where(a >= c, 1.0, 0.0))
    v2y = np.where(b != 0.0, vals[:, 1] - a, np.where(a >= c, 0.0, 1.0))
    nrm = np.sqrt(v2x * v2x + v2y * v2y)
    v2x = v2x / nrm
    v2y = v2y / nrm

    vecs = np.empty_like(A)
    vecs[:, 0, 1] = v2x
    vecs[:, 1, 1] = v2y
    vecs[:, 0, 0] = -v2y
    vecs[:, 1, 0] = v2x
    return vals, vecs


def _eigh(A):
    if A.shape[-1] == 2:
        return _eigh2(A)
    return np.linalg.eigh(A)


def _rebuild(vals, vecs):
    """V diag(vals) V^T for stacked eigensystems."""
    return np.einsum("nik,nk,njk->nij", vecs, vals, vecs)


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _sqrt_pair(P):
    """(P^{1/2}, P^{-1/2}) via eigendecomposition with clamped eigenvalues."""
    w, V = _eigh(P)
    s = np.sqrt(np.maximum(w, EIG_FLOOR))
    return _rebuild(s, V), _rebuild(1.0 / s, V)


def _equal_rows(A, B):
    return np.all(A == B, axis=(-2, -1))


def spd_log(P, Q):
    """Tangent matrices Log_P(Q) = P^{1/2} logm(P^{-1/2} Q P^{-1/2}) P^{1/2}."""
    sq, isq = _sqrt_pair(P)
    M = _sym(isq @ Q @ isq)
    w, V = _eigh(M)
    L = _rebuild(np.log(np.maximum(w, EIG_FLOOR)), V)
    out = _sym(sq @ L @ sq)
    eq = _equal_rows(P, Q)
    if np.any(eq):
        out[eq] = 0.0
    return out


def spd_exp(P, X):
    """Points Exp_P(X) = P^{1/2} expm(P^{-1/2} X P^{-1/2}) P^{1/2}."""
    zero = np.all(X == 0.0, axis=(-2, -1))
    sq, isq = _sqrt_pair(P)
    M = _sym(isq @ X @ isq)
    w, V = _eigh(M)
    E = _rebuild(np.exp(w), V)
    out = _sym(sq @ E @ sq)
    if np.any(zero):
        out[zero] = P[zero]
    return out


def spd_dist(P, Q):
    """Affine-invariant distances ||logm(P^{-1/2} Q P^{-1/2})||_F."""
    _, isq = _sqrt_pair(P)
    M = _sym(isq @ Q @ isq)
    w, _ = _eigh(M)
    lw = np.log(np.maximum(w, EIG_FLOOR))
    out = np.sqrt(np.sum(lw * lw, axis=-1))
    eq = _equal_rows(P, Q)
    if np.any(eq):
        out[eq] = 0.0
    return out


def spd_geopoint(P, Q, t):
    """Geodesic points P^{1/2} (P^{-1/2} Q P^{-1/2})^t P^{1/2}, t per row."""
    t = np.asarray(t, dtype=np.float64)
    sq, isq = _sqrt_pair(P)
    M = _sym(isq @ Q @ isq)
    w, V = _eigh(M)
    lw = np.log(np.maximum(w, EIG_FLOOR))
    powed = np.exp(t[:, None] * lw)
    out = _sym(sq @ _rebuild(powed, V) @ sq)
    eq = _equal_rows(P, Q)
    if np.any(eq):
        out[eq] = P[eq]
    z = t == 0.0
    if np.any(z):
        out[z] = P[z]
    o = t == 1.0
    if np.any(o):
        out[o] = Q[o]
    return out


def spd_inner(P, X, Y):
    """Metric values trace(P^{-1} X P^{-1} Y) per row."""
    w, V = _eigh(P)
    Pinv = _rebuild(1.0 / np.maximum(w, EIG_FLOOR), V)
    return np.einsum("nij,njk,nkl,nli->n", Pinv, X, Pinv, Y)
