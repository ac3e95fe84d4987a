"""Staggered operators versus dense Kronecker-product oracles."""

import numpy as np
import pytest

from mvmorph.errors import InvalidArgumentError
from mvmorph.staggered import (
    Displacement,
    RegularizerParams,
    apply_P,
    apply_P_T,
    apply_S_blocks,
    apply_St_blocks,
    apply_StS,
    det2,
    forward_jacobian,
    grid_coords,
    multi_indices,
    regularizer_gradient,
    regularizer_value,
    zero_boundary,
)

from util import random_displacement


# -- dense oracle -------------------------------------------------------------


def mat_center0(n):
    """(n, n-1) staggered-to-primal difference with zero first/last rows."""
    D = np.zeros((n, n - 1))
    for i in range(1, n - 1):
        D[i, i - 1] = -1.0
        D[i, i] = 1.0
    return D


def mat_valid(n):
    """(n-1, n) plain forward difference."""
    F = np.zeros((n - 1, n))
    for i in range(n - 1):
        F[i, i] = -1.0
        F[i, i + 1] = 1.0
    return F


def mat_valid_pow(n, a):
    M = np.eye(n)
    for k in range(a):
        M = mat_valid(n - k) @ M
    return M


def mat_avg(n):
    """(n, n-1) two-point average with zero first/last rows."""
    A = np.zeros((n, n - 1))
    for i in range(1, n - 1):
        A[i, i - 1] = 0.5
        A[i, i] = 0.5
    return A


def dense_blocks(n1, n2, p):
    """Dense (B1, B2) matrix pairs mirroring apply_S_blocks order."""
    I = np.eye
    G1 = np.kron(I(n2), mat_center0(n1))
    G2 = np.kron(mat_center0(n2), I(n1))
    Sh1 = np.kron(mat_valid(n2), I(n1 - 1))
    Sh2 = np.kron(I(n2 - 1), mat_valid(n1))
    m1 = (n1 - 1) * n2
    m2 = n1 * (n2 - 1)
    rows = []
    if p.mu > 0:
        c = np.sqrt(p.mu)
        rows.append((c * G1, np.zeros((G1.shape[0], m2))))
        rows.append((np.zeros((G2.shape[0], m1)), c * G2))
        cs = np.sqrt(0.5 * p.mu)
        rows.append((cs * Sh1, cs * Sh2))
    if p.lam > 0:
        c = np.sqrt(0.5 * p.lam)
        rows.append((c * G1, c * G2))
    if p.eta > 0:
        c = np.sqrt(p.eta)
        rows.append((c * I(m1), np.zeros((m1, m2))))
        rows.append((np.zeros((m2, m1)), c * I(m2)))
    if p.gamma > 0:
        c = np.sqrt(p.gamma)
        for a1, a2 in multi_indices(p.m):
            H = np.kron(mat_valid_pow(n2, a2), mat_valid_pow(n1 - 1, a1))
            rows.append((c * H, np.zeros((H.shape[0], m2))))
        for a1, a2 in multi_indices(p.m):
            H = np.kron(mat_valid_pow(n2 - 1, a2), mat_valid_pow(n1, a1))
            rows.append((np.zeros((H.shape[0], m1)), c * H))
    return rows


def dense_S(n1, n2, p):
    rows = dense_blocks(n1, n2, p)
    return np.vstack([np.hstack(r) for r in rows])


def flat(a):
    return np.asarray(a).flatten(order="F")


def vflat(v):
    return np.concatenate([flat(v.v1), flat(v.v2)])


def free_mask(n1, n2):
    m1 = np.ones((n1 - 1, n2), dtype=bool)
    m1[0, :] = m1[-1, :] = False
    m2 = np.ones((n1, n2 - 1), dtype=bool)
    m2[:, 0] = m2[:, -1] = False
    return np.concatenate([flat(m1), flat(m2)])


PARAMS = RegularizerParams(mu=0.7, lam=0.4, eta=0.2, gamma=0.9, m=3)


class TestApplyP:
    def test_zero(self):
        v = Displacement.zeros(5, 6)
        u1, u2 = apply_P(v)
        assert not u1.any() and not u2.any()

    def test_column_stencil(self):
        v = Displacement.zeros(4, 3)
        c = 1.7
        v.v1[1, :] = c
        u1, _ = apply_P(v)
        np.testing.assert_array_equal(u1[:, 0], [0.0, c / 2, c / 2, 0.0])

    def test_against_dense(self):
        rng = np.random.default_rng(0)
        n1, n2 = 6, 5
        v = random_displacement(n1, n2, rng)
        P1 = np.kron(np.eye(n2), mat_avg(n1))
        P2 = np.kron(mat_avg(n2), np.eye(n1))
        u1, u2 = apply_P(v)
        np.testing.assert_allclose(flat(u1), P1 @ flat(v.v1), atol=1e-12)
        np.testing.assert_allclose(flat(u2), P2 @ flat(v.v2), atol=1e-12)
        # adjoint
        g1 = rng.standard_normal((n1, n2))
        g2 = rng.standard_normal((n1, n2))
        w1, w2 = apply_P_T(g1, g2)
        np.testing.assert_allclose(flat(w1), P1.T @ flat(g1), atol=1e-12)
        np.testing.assert_allclose(flat(w2), P2.T @ flat(g2), atol=1e-12)


class TestRegularizer:
    def test_zero_field(self):
        assert regularizer_value(Displacement.zeros(5, 6), PARAMS) == 0.0

    @pytest.mark.parametrize("n1,n2", [(5, 6), (6, 5), (7, 7)])
    def test_value_matches_dense(self, n1, n2):
        rng = np.random.default_rng(1)
        v = random_displacement(n1, n2, rng)
        S = dense_S(n1, n2, PARAMS)
        expected = np.sum((S @ vflat(v)) ** 2)
        assert regularizer_value(v, PARAMS) == pytest.approx(expected, rel=1e-12)

    def test_blocks_match_dense(self):
        rng = np.random.default_rng(2)
        n1, n2 = 5, 6
        v = random_displacement(n1, n2, rng)
        blocks = apply_S_blocks(v, PARAMS)
        dense = dense_blocks(n1, n2, PARAMS)
        assert len(blocks) == len(dense)
        x = vflat(v)
        for arr, (B1, B2) in zip(blocks, dense):
            np.testing.assert_allclose(
                flat(arr), np.hstack([B1, B2]) @ x, atol=1e-12
            )

    def test_adjoint_matches_dense(self):
        rng = np.random.default_rng(3)
        for n1, n2 in [(5, 6), (8, 8)]:
            v = random_displacement(n1, n2, rng)
            blocks = [rng.standard_normal(b.shape) for b in apply_S_blocks(v, PARAMS)]
            w1, w2 = apply_St_blocks(blocks, PARAMS, (n1, n2))
            S = dense_S(n1, n2, PARAMS)
            g = np.concatenate([flat(b) for b in blocks])
            np.testing.assert_allclose(
                np.concatenate([flat(w1), flat(w2)]), S.T @ g, atol=1e-12
            )

    def test_eta_only_collapses(self):
        rng = np.random.default_rng(4)
        v = random_displacement(6, 7, rng)
        p = RegularizerParams(eta=0.8)
        expected = 0.8 * (np.sum(v.v1**2) + np.sum(v.v2**2))
        assert regularizer_value(v, p) == pytest.approx(expected, rel=1e-14)
        g = regularizer_gradient(v, p)
        np.testing.assert_allclose(g.v1, 2 * 0.8 * v.v1, atol=1e-14)
        np.testing.assert_allclose(g.v2, 2 * 0.8 * v.v2, atol=1e-14)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(5)
        v = random_displacement(5, 6, rng)
        g = regularizer_gradient(v, PARAMS)
        h = 1e-6

        def fd(arr, setter):
            out = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                vp, vm = v.copy(), v.copy()
                setter(vp, idx, h)
                setter(vm, idx, -h)
                out[idx] = (
                    regularizer_value(vp, PARAMS) - regularizer_value(vm, PARAMS)
                ) / (2 * h)
            return out

        fd1 = fd(v.v1[1:-1], lambda w, i, d: w.v1.__setitem__((i[0] + 1, i[1]), w.v1[i[0] + 1, i[1]] + d))
        np.testing.assert_allclose(g.v1[1:-1], fd1, rtol=1e-6, atol=1e-7)
        fd2 = fd(v.v2[:, 1:-1], lambda w, i, d: w.v2.__setitem__((i[0], i[1] + 1), w.v2[i[0], i[1] + 1] + d))
        np.testing.assert_allclose(g.v2[:, 1:-1], fd2, rtol=1e-6, atol=1e-7)

    def test_StS_symmetry_and_quadratic_form(self):
        rng = np.random.default_rng(6)
        u = random_displacement(6, 6, rng)
        w = random_displacement(6, 6, rng)
        Au = apply_StS(u, PARAMS)
        Aw = apply_StS(w, PARAMS)
        assert Au.dot(w) == pytest.approx(u.dot(Aw), abs=1e-12)
        assert apply_StS(Displacement.zeros(6, 6), PARAMS).norm() == 0.0
        assert Au.dot(u) == pytest.approx(regularizer_value(u, PARAMS), rel=1e-10)

    def test_high_order_null_space(self):
        # quadratic profile vanishing at the staggered ends: annihilated by
        # all third-order differences
        n1, n2 = 9, 8
        x1 = np.arange(n1 - 1) + 1.5
        q = (x1 - 1.5) * (n1 - 0.5 - x1)
        v = Displacement(np.tile(q[:, None], (1, n2)), np.zeros((n1, n2 - 1)))
        p = RegularizerParams(gamma=1.0, m=3)
        assert regularizer_value(v, p) == pytest.approx(0.0, abs=1e-20)
        assert regularizer_value(Displacement.zeros(n1, n2), p) == 0.0

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(7)
        n = 7
        v = random_displacement(n, n, rng)
        vt = Displacement(v.v2.T.copy(), v.v1.T.copy())
        assert regularizer_value(vt, PARAMS) == pytest.approx(
            regularizer_value(v, PARAMS), rel=1e-12
        )


class TestJacobian:
    def test_identity(self):
        J = forward_jacobian(grid_coords(6, 7))
        np.testing.assert_array_equal(J, np.broadcast_to(np.eye(2), (6, 7, 2, 2)))

    def test_affine(self):
        A = np.array([[1.2, 0.3], [-0.1, 0.8]])
        X = grid_coords(5, 6)
        J = forward_jacobian(X @ A.T)
        np.testing.assert_allclose(J, np.broadcast_to(A, (5, 6, 2, 2)), atol=1e-12)
        np.testing.assert_allclose(det2(J), np.linalg.det(A), atol=1e-12)

    def test_translation(self):
        X = grid_coords(5, 6) + np.array([0.7, -0.2])
        J = forward_jacobian(X)
        np.testing.assert_allclose(J, np.broadcast_to(np.eye(2), (5, 6, 2, 2)), atol=1e-12)


class TestDisplacement:
    def test_boundary_enforced(self):
        with pytest.raises(InvalidArgumentError):
            Displacement(np.ones((4, 5)), np.zeros((5, 4)))

    def test_shape_consistency(self):
        with pytest.raises(InvalidArgumentError):
            Displacement(np.zeros((4, 5)), np.zeros((4, 4)))

    def test_zero_boundary_projection(self):
        v = zero_boundary(np.ones((4, 5)), np.ones((5, 4)))
        assert v.v1[0].sum() == 0 and v.v1[-1].sum() == 0
        assert v.v1[1:-1].sum() == 2 * 5

    def test_params_validation(self):
        with pytest.raises(InvalidArgumentError):
            RegularizerParams()
        with pytest.raises(InvalidArgumentError):
            RegularizerParams(mu=-1.0)
