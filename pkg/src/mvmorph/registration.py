"""Elastic registration of manifold-valued image pairs.

Minimizes ||S v||^2 + sum_x d^2(T(x - (Pv)(x)), R(x)) over staggered
displacements v by a quasi-Newton iteration: Gauss-Newton Hessian
2 S^T S + J^T J solved matrix-free with conjugate gradients, then Armijo
backtracking on the full energy.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .images import sample_with_gradient
from .staggered import (
    Displacement,
    _avg_center0,
    _avg_center0_T,
    apply_P,
    apply_P_T,
    det2,
    forward_jacobian,
    grid_coords,
    regularizer_gradient,
    regularizer_value,
    StSOperator,

    zero_boundary,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegisterOptions:
    """Solver knobs; defaults scale the gradient tolerance by the pixel count."""

    gtol_scale: float = 1e-6
    ftol: float = 1e-9
    max_iter: int = 100
    cg_rtol: float = 1e-8
    cg_maxiter: int = 200
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtracks: int = 30


@dataclass
class RegistrationResult:
    v: Displacement
    energy_trace: list
    converged: bool
    iterations: int
    min_det: float = np.inf
    fallback_steps: int = 0


def _check_pair(T, R):
    if T.manifold is not R.manifold and repr(T.manifold) != repr(R.manifold):
        raise InvalidArgumentError("template and reference manifolds differ")
    if T.shape != R.shape:
        raise InvalidArgumentError("template and reference shapes differ")


def warp_positions(v):
    """Warped sample positions x - (Pv)(x) on the pixel grid."""
    n1, n2 = v.shape
    u1, u2 = apply_P(v)
    X = grid_coords(n1, n2)
    return X - np.stack([u1, u2], axis=-1)


def data_term(T, R, v):
    """Sum of squared distances between the warped template and reference."""
    _check_pair(T, R)
    from .images import bilinear_sample

    W = warp_positions(v)
    samples = bilinear_sample(T, W)
    d = T.manifold._dist(samples, R.data)
    return float(np.sum(d * d))


def residual_coefficients(T, R, v):
    """Per-pixel inner products feeding the gradient and the Jacobian.

    Returns (data value, g1, g2) with g_i(x) = 2 <log_{T(w)} R(x),
    grad_{x_i} T(w)> evaluated at the warped positions w = x - (Pv)(x).
    """
    _check_pair(T, R)
    m = T.manifold
    n1, n2 = v.shape
    q = warp_positions(v).reshape(-1, 2)
    base, d1, d2 = sample_with_gradient(T, q)
    rflat = R.data.reshape(-1, m.point_dim)
    lr = m._log(base, rflat)
    value = float(np.sum(m._inner(base, lr, lr)))
    g1 = 2.0 * m._inner(base, lr, d1).reshape(n1, n2)
    g2 = 2.0 * m._inner(base, lr, d2).reshape(n1, n2)
    return value, g1, g2


def data_gradient(T, R, v):
    """Staggered gradient of the data term (projected onto free entries)."""
    _, g1, g2 = residual_coefficients(T, R, v)
    return zero_boundary(*apply_P_T(g1, g2))


def full_gradient(T, R, v, params):
    """Gradient of the registration energy: 2 S^T S v + G(v)."""
    return regularizer_gradient(v, params) + data_gradient(T, R, v)


def _jtj_raw(g1, g2, d1, d2):
    u1 = _avg_center0(d1, 0)
    u2 = _avg_center0(d2, 1)
    r = g1 * u1 + g2 * u2
    j1 = _avg_center0_T(g1 * r, 0)
    j2 = _avg_center0_T(g2 * r, 1)
    j1[0, :] = j1[-1, :] = 0.0
    j2[:, 0] = j2[:, -1] = 0.0
    return j1, j2


def _jtj_apply(g1, g2, d):
    """Gauss-Newton data block J^T J d from frozen coefficient fields."""
    return Displacement(*_jtj_raw(g1, g2, d.v1, d.v2))


def _dot(a1, a2, b1, b2):
    return float(a1.ravel() @ b1.ravel() + a2.ravel() @ b2.ravel())


def _solve_gauss_newton(params, g1, g2, grad, opts, shape, sts=None):
    """Jacobi-preconditioned CG on (2 S^T S + J^T J + eps I) D = -grad.

    Returns (D, fell_back); falls back to steepest descent on stagnation or
    indefiniteness.
    """
    sts = sts or StSOperator(params, shape)
    ds1, ds2 = sts.diagonal()
    dj1 = 0.5 * _avg_center0_T(g1 * g1, 0)
    dj2 = 0.5 * _avg_center0_T(g2 * g2, 1)
    diag1 = 2.0 * ds1 + dj1
    diag2 = 2.0 * ds2 + dj2
    scale = 0.5 * (np.mean(diag1) + np.mean(diag2))
    eps = 1e-8 * max(scale, 1e-12)
    M1 = diag1 + eps
    M2 = diag2 + eps
    M1[0, :] = M1[-1, :] = 1.0
    M2[:, 0] = M2[:, -1] = 1.0

    def H(d1, d2):
        h1, h2 = sts.apply(d1, d2)
        j1, j2 = _jtj_raw(g1, g2, d1, d2)
        return 2.0 * h1 + j1 + eps * d1, 2.0 * h2 + j2 + eps * d2

    b1, b2 = -grad.v1, -grad.v2
    bnorm = np.sqrt(_dot(b1, b2, b1, b2))
    if bnorm == 0.0:
        return Displacement.zeros(*shape), False

    x1 = np.zeros_like(b1)
    x2 = np.zeros_like(b2)
    r1, r2 = b1.copy(), b2.copy()
    z1, z2 = r1 / M1, r2 / M2
    d1, d2 = z1.copy(), z2.copy()
    rz = _dot(r1, r2, z1, z2)
    for _ in range(opts.cg_maxiter):
        q1, q2 = H(d1, d2)
        curv = _dot(d1, d2, q1, q2)
        if curv <= 0.0 or not np.isfinite(curv):
            logger.debug("CG hit nonpositive curvature; steepest descent")
            return -1.0 * grad, True
        alpha = rz / curv
        x1 += alpha * d1
        x2 += alpha * d2
        r1 -= alpha * q1
        r2 -= alpha * q2
        if np.sqrt(_dot(r1, r2, r1, r2)) <= opts.cg_rtol * bnorm:
            break
        z1, z2 = r1 / M1, r2 / M2
        rz_new = _dot(r1, r2, z1, z2)
        d1 = z1 + (rz_new / rz) * d1
        d2 = z2 + (rz_new / rz) * d2
        rz = rz_new
    if _dot(x1, x2, grad.v1, grad.v2) >= 0.0:
        return -1.0 * grad, True
    return Displacement(x1, x2), False


def gauss_newton_direction(T, R, v, params, opts=None):
    """Descent direction -H^{-1} grad with the Gauss-Newton Hessian."""
    opts = opts or RegisterOptions()
    _, g1, g2 = residual_coefficients(T, R, v)
    grad = full_gradient(T, R, v, params)
    direction, _ = _solve_gauss_newton(params, g1, g2, grad, opts, v.shape)
    return direction


def _min_det(v):
    phi = warp_positions(v)
    return float(det2(forward_jacobian(phi)).min())


def register(T, R, params, v0=None, opts=None):
    """Quasi-Newton minimization of the registration energy.

    Stops on the gradient norm, on the relative energy change, or after
    ``opts.max_iter`` iterations; a failed line search returns the best
    iterate with ``converged=False``. The energy trace is non-increasing.
    """
    _check_pair(T, R)
    opts = opts or RegisterOptions()
    n1, n2 = T.shape
    v = v0.copy() if v0 is not None else Displacement.zeros(n1, n2)
    if v.shape != (n1, n2):
        raise InvalidArgumentError("v0 shape does not match the images")
    gtol = opts.gtol_scale * n1 * n2

    reg_val = regularizer_value(v, params)
    data_val = data_term(T, R, v)
    total = reg_val + data_val
    trace = [(0, total, reg_val, data_val)]
    min_det = _min_det(v)
    converged = False
    fallbacks = 0
    it = 0

    sts = StSOperator(params, (n1, n2))
    for it in range(1, opts.max_iter + 1):
        _, g1, g2 = residual_coefficients(T, R, v)
        grad = 2.0 * Displacement(*sts.apply(v.v1, v.v2)) + zero_boundary(
            *apply_P_T(g1, g2)
        )
        if grad.norm() <= gtol:
            converged = True
            it -= 1
            break

        direction, fell_back = _solve_gauss_newton(
            params, g1, g2, grad, opts, (n1, n2), sts=sts
        )
        fallbacks += fell_back
        slope = grad.dot(direction)

        tau = 1.0
        accepted = False
        for _ in range(opts.max_backtracks + 1):
            v_try = v + tau * direction
            reg_try = regularizer_value(v_try, params)
            data_try = data_term(T, R, v_try)
            total_try = reg_try + data_try
            if total_try <= total + opts.armijo_c1 * tau * slope:
                accepted = True
                break
            tau *= opts.armijo_shrink
        if not accepted:
            logger.debug("line search failed at iteration %d", it)
            it -= 1
            break

        v = v_try
        prev_total = total
        reg_val, data_val, total = reg_try, data_try, total_try
        trace.append((it, total, reg_val, data_val))
        min_det = min(min_det, _min_det(v))
        logger.debug(
            "iter %d: J=%.6e reg=%.3e data=%.3e det_min=%.3f",
            it,
            total,
            reg_val,
            data_val,
            min_det,
        )
        if abs(prev_total - total) <= opts.ftol * max(1.0, abs(prev_total)):
            converged = True
            break

    return RegistrationResult(
        v=v,
        energy_trace=trace,
        converged=converged,
        iterations=it if it else 0,
        min_det=min_det,
        fallback_steps=fallbacks,
    )
