"""Staggered-grid calculus for displacement fields.

Images live on the primal grid G = {1..n1} x {1..n2}. The displacement
component v1 lives on the half-shifted rows G1 (shape (n1-1, n2)) and v2 on
the half-shifted columns G2 (shape (n1, n2-1)); both carry zero normal flow,
i.e. the first and last staggered row of v1 and column of v2 are exactly
zero, while flow along the boundary stays free.

All operators are matrix-free; the test suite compares them against dense
Kronecker-product assemblies.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


def grid_coords(n1, n2):
    """Node coordinates of the primal grid, shape (n1, n2, 2), 1-based."""
    x1, x2 = np.meshgrid(
        np.arange(1.0, n1 + 1.0), np.arange(1.0, n2 + 1.0), indexing="ij"
    )
    return np.stack([x1, x2], axis=-1)


@dataclass
class Displacement:
    """Staggered displacement field (v1, v2) in pixel units."""

    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        self.v1 = np.asarray(self.v1, dtype=np.float64)
        self.v2 = np.asarray(self.v2, dtype=np.float64)
        n1 = self.v1.shape[0] + 1
        n2 = self.v1.shape[1]
        if self.v2.shape != (n1, n2 - 1):
            raise InvalidArgumentError(
                f"inconsistent staggered shapes {self.v1.shape} / {self.v2.shape}"
            )
        if (
            np.any(self.v1[0, :] != 0.0)
            or np.any(self.v1[-1, :] != 0.0)
            or np.any(self.v2[:, 0] != 0.0)
            or np.any(self.v2[:, -1] != 0.0)
        ):
            raise InvalidArgumentError("zero normal-flow boundary rows violated")

    @classmethod
    def zeros(cls, n1, n2):
        return cls(np.zeros((n1 - 1, n2)), np.zeros((n1, n2 - 1)))

    @property
    def shape(self):
        return (self.v1.shape[0] + 1, self.v1.shape[1])

    def copy(self):
        return Displacement(self.v1.copy(), self.v2.copy())

    def __add__(self, other):
        return Displacement(self.v1 + other.v1, self.v2 + other.v2)

    def __sub__(self, other):
        return Displacement(self.v1 - other.v1, self.v2 - other.v2)

    def __mul__(self, s):
        return Displacement(self.v1 * s, self.v2 * s)

    __rmul__ = __mul__

    def __neg__(self):
        return Displacement(-self.v1, -self.v2)

    def dot(self, other):
        return float(
            np.sum(self.v1 * other.v1) + np.sum(self.v2 * other.v2)
        )

    def norm(self):
        return np.sqrt(self.dot(self))


def zero_boundary(v1, v2):
    """Project raw staggered arrays onto the zero normal-flow subspace."""
    v1 = np.array(v1, dtype=np.float64, copy=True)
    v2 = np.array(v2, dtype=np.float64, copy=True)
    v1[0, :] = 0.0
    v1[-1, :] = 0.0
    v2[:, 0] = 0.0
    v2[:, -1] = 0.0
    return Displacement(v1, v2)


@dataclass(frozen=True)
class RegularizerParams:
    """Weights of the quadratic displacement regularizer."""

    mu: float = 0.0
    lam: float = 0.0
    eta: float = 0.0
    gamma: float = 0.0
    m: int = 3

    def __post_init__(self):
        if min(self.mu, self.lam, self.eta, self.gamma) < 0:
            raise InvalidArgumentError("regularizer weights must be nonnegative")
        if max(self.mu, self.lam, self.eta, self.gamma) <= 0:
            raise InvalidArgumentError("at least one regularizer weight must be positive")
        if self.m < 1:
            raise InvalidArgumentError("difference order m must be >= 1")


# -- first-order building blocks --------------------------------------------


def _d_center0(v, axis):
    """Staggered-to-primal difference with zero first/last primal entries."""
    n = v.shape[axis] + 1
    shape = list(v.shape)
    shape[axis] = n
    out = np.zeros(shape)
    sl = [slice(None)] * v.ndim
    sl[axis] = slice(1, n - 1)
    a = [slice(None)] * v.ndim
    b = [slice(None)] * v.ndim
    a[axis] = slice(1, None)
    b[axis] = slice(None, -1)
    out[tuple(sl)] = v[tuple(a)] - v[tuple(b)]
    return out


def _d_center0_T(g, axis):
    n = g.shape[axis]
    shape = list(g.shape)
    shape[axis] = n - 1
    out = np.zeros(shape)
    mid = [slice(None)] * g.ndim
    mid[axis] = slice(1, n - 1)
    gm = g[tuple(mid)]
    hi = [slice(None)] * g.ndim
    lo = [slice(None)] * g.ndim
    hi[axis] = slice(1, None)
    lo[axis] = slice(None, -1)
    out[tuple(hi)] += gm
    out[tuple(lo)] -= gm
    return out


def _d_valid(v, axis):
    return np.diff(v, axis=axis)


def _d_valid_T(g, axis):
    n = g.shape[axis] + 1
    shape = list(g.shape)
    shape[axis] = n
    out = np.zeros(shape)
    hi = [slice(None)] * g.ndim
    lo = [slice(None)] * g.ndim
    hi[axis] = slice(1, None)
    lo[axis] = slice(None, -1)
    out[tuple(hi)] += g
    out[tuple(lo)] -= g
    return out


def _avg_center0(v, axis):
    n = v.shape[axis] + 1
    shape = list(v.shape)
    shape[axis] = n
    out = np.zeros(shape)
    sl = [slice(None)] * v.ndim
    sl[axis] = slice(1, n - 1)
    a = [slice(None)] * v.ndim
    b = [slice(None)] * v.ndim
    a[axis] = slice(1, None)
    b[axis] = slice(None, -1)
    out[tuple(sl)] = 0.5 * (v[tuple(a)] + v[tuple(b)])
    return out


def _avg_center0_T(g, axis):
    n = g.shape[axis]
    shape = list(g.shape)
    shape[axis] = n - 1
    out = np.zeros(shape)
    mid = [slice(None)] * g.ndim
    mid[axis] = slice(1, n - 1)
    gm = g[tuple(mid)]
    hi = [slice(None)] * g.ndim
    lo = [slice(None)] * g.ndim
    hi[axis] = slice(1, None)
    lo[axis] = slice(None, -1)
    out[tuple(hi)] += 0.5 * gm
    out[tuple(lo)] += 0.5 * gm
    return out


def _d_power(v, a1, a2):
    """Repeated valid forward differences: a1 along rows, a2 along columns."""
    out = v
    for _ in range(a1):
        out = _d_valid(out, 0)
    for _ in range(a2):
        out = _d_valid(out, 1)
    return out


def _d_power_T(g, a1, a2, shape):
    out = g
    for _ in range(a2):
        out = _d_valid_T(out, 1)
    for _ in range(a1):
        out = _d_valid_T(out, 0)
    assert out.shape == shape
    return out


def multi_indices(m):
    """Orders (a1, a2) with a1 + a2 = m, a1 descending."""
    return [(m - a2, a2) for a2 in range(m + 1)]


# -- the averaging operator P ------------------------------------------------


def apply_P(v):
    """Bilinear averages of the staggered field at the primal nodes.

    Returns two (n1, n2) arrays; the first/last row of the first component
    and first/last column of the second are zero.
    """
    return _avg_center0(v.v1, 0), _avg_center0(v.v2, 1)


def apply_P_T(g1, g2):
    """Adjoint of apply_P; returns raw staggered arrays (not projected)."""
    return _avg_center0_T(g1, 0), _avg_center0_T(g2, 1)


def p_field(v):
    """apply_P stacked into an (n1, n2, 2) vector field."""
    u1, u2 = apply_P(v)
    return np.stack([u1, u2], axis=-1)


# -- the regularizer S ---------------------------------------------------------


def _block_specs(p):
    """Canonical ordered description of the rows of the stacked operator S."""
    specs = []
    if p.mu > 0:
        specs.append(("grad1", np.sqrt(p.mu)))
        specs.append(("grad2", np.sqrt(p.mu)))
        specs.append(("shear", np.sqrt(0.5 * p.mu)))
    if p.lam > 0:
        specs.append(("div", np.sqrt(0.5 * p.lam)))
    if p.eta > 0:
        specs.append(("id1", np.sqrt(p.eta)))
        specs.append(("id2", np.sqrt(p.eta)))
    if p.gamma > 0:
        for a in multi_indices(p.m):
            specs.append((("high1", a), np.sqrt(p.gamma)))
        for a in multi_indices(p.m):
            specs.append((("high2", a), np.sqrt(p.gamma)))
    return specs


def _s_blocks_raw(v1, v2, p):
    out = []
    for tag, c in _block_specs(p):
        if tag == "grad1":
            arr = _d_center0(v1, 0)
        elif tag == "grad2":
            arr = _d_center0(v2, 1)
        elif tag == "shear":
            arr = _d_valid(v1, 1) + _d_valid(v2, 0)
        elif tag == "div":
            arr = _d_center0(v1, 0) + _d_center0(v2, 1)
        elif tag == "id1":
            arr = v1
        elif tag == "id2":
            arr = v2
        elif tag[0] == "high1":
            arr = _d_power(v1, *tag[1])
        else:
            arr = _d_power(v2, *tag[1])
        out.append(c * arr)
    return out


def apply_S_blocks(v, p):
    """The stacked residual S v as an ordered list of scaled arrays."""
    return _s_blocks_raw(v.v1, v.v2, p)


def apply_St_blocks(blocks, p, shape):
    """Adjoint of apply_S_blocks; returns raw staggered arrays."""
    n1, n2 = shape
    w1 = np.zeros((n1 - 1, n2))
    w2 = np.zeros((n1, n2 - 1))
    for (tag, c), arr in zip(_block_specs(p), blocks):
        if tag == "grad1":
            w1 += c * _d_center0_T(arr, 0)
        elif tag == "grad2":
            w2 += c * _d_center0_T(arr, 1)
        elif tag == "shear":
            w1 += c * _d_valid_T(arr, 1)
            w2 += c * _d_valid_T(arr, 0)
        elif tag == "div":
            w1 += c * _d_center0_T(arr, 0)
            w2 += c * _d_center0_T(arr, 1)
        elif tag == "id1":
            w1 += c * arr
        elif tag == "id2":
            w2 += c * arr
        elif tag[0] == "high1":
            w1 += c * _d_power_T(arr, *tag[1], w1.shape)
        else:
            w2 += c * _d_power_T(arr, *tag[1], w2.shape)
    return w1, w2


def regularizer_value(v, p):
    """The quadratic form ||S v||^2."""
    return float(sum(np.sum(b * b) for b in apply_S_blocks(v, p)))


def sts_apply_raw(v1, v2, p):
    """S^T S on raw staggered arrays, boundary entries zeroed in place."""
    n1 = v1.shape[0] + 1
    w1, w2 = apply_St_blocks(_s_blocks_raw(v1, v2, p), p, (n1, v1.shape[1]))
    w1[0, :] = 0.0
    w1[-1, :] = 0.0
    w2[:, 0] = 0.0
    w2[:, -1] = 0.0
    return w1, w2


def apply_StS(v, p):
    """S^T S v restricted to the zero normal-flow subspace."""
    return Displacement(*sts_apply_raw(v.v1, v.v2, p))


def regularizer_gradient(v, p):
    """Gradient 2 S^T S v of regularizer_value over the free entries."""
    return 2.0 * apply_StS(v, p)


def _mat_center0(n):
    D = np.zeros((n, n - 1))
    idx = np.arange(1, n - 1)
    D[idx, idx - 1] = -1.0
    D[idx, idx] = 1.0
    return D


def _mat_valid_pow(n, a):
    M = np.eye(n)
    for k in range(a):
        F = np.zeros((n - k - 1, n - k))
        idx = np.arange(n - k - 1)
        F[idx, idx] = -1.0
        F[idx, idx + 1] = 1.0
        M = F @ M
    return M


def _gram(M):
    return M.T @ M


class StSOperator:
    """S^T S products via precomputed dense 1-D Kronecker factors.

    Every block of S is a tensor product of small 1-D matrices, so the
    normal-equations product reduces to a fixed set of small matrix-matrix
    multiplies; this is the hot path of the Gauss-Newton CG solve. Output
    boundary entries are zeroed (free-subspace restriction), matching
    apply_StS.
    """

    def __init__(self, p, shape):
        n1, n2 = shape
        self.p = p
        self.shape = shape
        self.A1 = _mat_center0(n1)  # (n1, n1-1), rows of v1
        self.A2 = _mat_center0(n2)  # (n2, n2-1), cols of v2
        self.AtA1 = _gram(self.A1)
        self.AtA2 = _gram(self.A2)
        self.Fr = _mat_valid_pow(n1, 1)  # (n1-1, n1), rows of v2, shear
        self.Fc = _mat_valid_pow(n2, 1)  # (n2-1, n2), cols of v1, shear
        self.high1 = []
        self.high2 = []
        if p.gamma > 0:
            # identity factors (order 0 on one axis) are skipped in apply()
            for a1, a2 in multi_indices(p.m):
                self.high1.append(
                    (
                        _gram(_mat_valid_pow(n1 - 1, a1)) if a1 else None,
                        _gram(_mat_valid_pow(n2, a2)) if a2 else None,
                    )
                )
                self.high2.append(
                    (
                        _gram(_mat_valid_pow(n1, a1)) if a1 else None,
                        _gram(_mat_valid_pow(n2 - 1, a2)) if a2 else None,
                    )
                )

    def diagonal(self):
        if not hasattr(self, "_diag"):
            self._diag = sts_diagonal(self.p, self.shape)
        return self._diag

    def apply(self, v1, v2):
        p = self.p
        w1 = np.zeros_like(v1)
        w2 = np.zeros_like(v2)
        if p.mu > 0:
            w1 += p.mu * (self.AtA1 @ v1)
            w2 += p.mu * (v2 @ self.AtA2)
            sh = v1 @ self.Fc.T + self.Fr @ v2
            w1 += (0.5 * p.mu) * (sh @ self.Fc)
            w2 += (0.5 * p.mu) * (self.Fr.T @ sh)
        if p.lam > 0:
            div = self.A1 @ v1 + v2 @ self.A2.T
            w1 += (0.5 * p.lam) * (self.A1.T @ div)
            w2 += (0.5 * p.lam) * (div @ self.A2)
        if p.eta > 0:
            w1 += p.eta * v1
            w2 += p.eta * v2
        if p.gamma > 0:
            for G, K in self.high1:
                t = v1 if G is None else G @ v1
                w1 += p.gamma * (t if K is None else t @ K)
            for G, K in self.high2:
                t = v2 if G is None else G @ v2
                w2 += p.gamma * (t if K is None else t @ K)
        w1[0, :] = 0.0
        w1[-1, :] = 0.0
        w2[:, 0] = 0.0
        w2[:, -1] = 0.0
        return w1, w2


def _colsq_center0(n):
    """Column sums of squares of the staggered-to-primal difference matrix."""
    j = np.arange(n - 1)
    return ((j >= 1) & (j <= n - 2)).astype(float) + (j <= n - 3)


def _colsq_valid_pow(n, a):
    if a == 0:
        return np.ones(n)
    M = np.eye(n)
    for k in range(a):
        F = np.zeros((n - k - 1, n - k))
        idx = np.arange(n - k - 1)
        F[idx, idx] = -1.0
        F[idx, idx + 1] = 1.0
        M = F @ M
    return np.sum(M * M, axis=0)


def sts_diagonal(p, shape):
    """Exact diagonal of S^T S, using the Kronecker structure of each block."""
    n1, n2 = shape
    d1 = np.zeros((n1 - 1, n2))
    d2 = np.zeros((n1, n2 - 1))
    cA1 = _colsq_center0(n1)
    cA2 = _colsq_center0(n2)
    if p.mu > 0:
        d1 += p.mu * cA1[:, None]
        d2 += p.mu * cA2[None, :]
        d1 += 0.5 * p.mu * _colsq_valid_pow(n2, 1)[None, :]
        d2 += 0.5 * p.mu * _colsq_valid_pow(n1, 1)[:, None]
    if p.lam > 0:
        d1 += 0.5 * p.lam * cA1[:, None]
        d2 += 0.5 * p.lam * cA2[None, :]
    if p.eta > 0:
        d1 += p.eta
        d2 += p.eta
    if p.gamma > 0:
        for a1, a2 in multi_indices(p.m):
            d1 += p.gamma * np.outer(
                _colsq_valid_pow(n1 - 1, a1), _colsq_valid_pow(n2, a2)
            )
            d2 += p.gamma * np.outer(
                _colsq_valid_pow(n1, a1), _colsq_valid_pow(n2 - 1, a2)
            )
    return d1, d2


# -- node-centered Jacobians ---------------------------------------------------


def forward_jacobian(phi):
    """Per-node 2x2 Jacobian of a map G -> R^2 by forward differences.

    One-sided backward differences at the last row/column; exact for affine
    maps everywhere.
    """
    phi = np.asarray(phi, dtype=np.float64)
    n1, n2 = phi.shape[:2]
    J = np.empty((n1, n2, 2, 2))
    J[:-1, :, :, 0] = phi[1:, :, :] - phi[:-1, :, :]
    J[-1, :, :, 0] = phi[-1, :, :] - phi[-2, :, :]
    J[:, :-1, :, 1] = phi[:, 1:, :] - phi[:, :-1, :]
    J[:, -1, :, 1] = phi[:, -1, :] - phi[:, -2, :]
    return J


def det2(J):
    """Determinants of a 2x2 matrix field."""
    return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
