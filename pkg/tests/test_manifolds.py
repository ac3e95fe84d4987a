"""Unit tests for the manifold kernels.

SPD expectations are frozen against a scipy.linalg oracle (logm/expm/sqrtm),
kept independent of the package's eigendecomposition route.
"""

import numpy as np
import pytest
import scipy.linalg as sla

from mvmorph import (
    Circle,
    ConvergenceError,
    CutLocusError,
    Euclidean,
    InvalidArgumentError,
    Product,
    Sphere,
    Spd,
    Tangent,
)
from mvmorph.manifolds import karcher_mean_many, wrap_angle

from util import base_point, perturb, random_point, random_tangent_coords

ALL_MANIFOLDS = [
    Euclidean(1),
    Euclidean(3),
    Circle(),
    Sphere(2),
    Spd(2),
    Spd(3),
    Product([(Circle(), 1.0), (Euclidean(2), 1.0)]),
    Product([(Sphere(2), 1.0), (Euclidean(1), 1.0)]),
]


def spd_oracle_log(P, Q):
    """Log_P(Q) by scipy matrix functions."""
    s = sla.sqrtm(P)
    si = np.linalg.inv(s)
    return s @ sla.logm(si @ Q @ si) @ s


def spd_oracle_exp(P, V):
    s = sla.sqrtm(P)
    si = np.linalg.inv(s)
    return s @ sla.expm(si @ V @ si) @ s


def spd_oracle_dist(P, Q):
    s = sla.sqrtm(P)
    si = np.linalg.inv(s)
    return np.linalg.norm(sla.logm(si @ Q @ si), "fro")


class TestExamples:
    def test_spd2_dist_identity_to_diag(self):
        m = Spd(2)
        p = np.eye(2).ravel()
        q = np.diag([np.e**2, 1.0]).ravel()
        assert spd_oracle_dist(np.eye(2), np.diag([np.e**2, 1.0])) == pytest.approx(2.0)
        assert m.dist(p, q) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_dist_self_is_zero(self, m):
        p = random_point(m, np.random.default_rng(0))
        assert m.dist(p, p) == 0.0

    def test_circle_quarter_turn(self):
        m = Circle()
        assert m.dist([0.0], [np.pi / 2]) == pytest.approx(np.pi / 2, abs=1e-15)

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_exp_zero_tangent(self, m):
        p = random_point(m, np.random.default_rng(1))
        out = m.exp(p, Tangent(base=p, coords=np.zeros(m.tangent_dim)))
        assert np.array_equal(out, p)

    def test_sphere_exp_quarter_circle(self):
        m = Sphere(2)
        p = np.array([0.0, 0.0, 1.0])
        v = Tangent(base=p, coords=np.array([np.pi / 2, 0.0, 0.0]))
        np.testing.assert_allclose(m.exp(p, v), [1.0, 0.0, 0.0], atol=1e-15)

    def test_spd3_double_log_construction(self):
        # reference tensor pair: A_R = exp_{3I}(2 log_{3I}(A_T))
        m = Spd(3)
        at = np.array([[3.0, 2.0, 1.0], [2.0, 4.0, -1.0], [1.0, -1.0, 2.0]])
        base = 3.0 * np.eye(3)
        ar_oracle = spd_oracle_exp(base, 2.0 * spd_oracle_log(base, at))

        t = m.log(base.ravel(), at.ravel())
        ar = m.exp(base.ravel(), Tangent(base=t.base, coords=2.0 * t.coords))
        np.testing.assert_allclose(ar.reshape(3, 3), ar_oracle, atol=1e-10)

        mid = m.geopoint(base.ravel(), ar, 0.5)
        np.testing.assert_allclose(mid.reshape(3, 3), at, atol=1e-10)

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_log_self_is_zero(self, m):
        p = random_point(m, np.random.default_rng(2))
        t = m.log(p, p)
        assert np.all(t.coords == 0.0)

    def test_circle_log_wraps(self):
        m = Circle()
        t = m.log([0.0], [float(wrap_angle(3 * np.pi / 2))])
        assert t.coords[0] == pytest.approx(-np.pi / 2, abs=1e-15)

    def test_spd2_log_commuting(self):
        m = Spd(2)
        t = m.log(np.eye(2).ravel(), np.diag([np.e**2, 1.0]).ravel())
        np.testing.assert_allclose(t.coords.reshape(2, 2), np.diag([2.0, 0.0]), atol=1e-12)

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_geopoint_endpoints(self, m):
        rng = np.random.default_rng(3)
        p = random_point(m, rng)
        q = perturb(m, p, rng, 0.7)
        assert np.array_equal(m.geopoint(p, q, 0.0), p)
        assert np.array_equal(m.geopoint(p, q, 1.0), q)

    def test_euclidean_geopoint_linear(self):
        m = Euclidean(1)
        assert m.geopoint([0.0], [4.0], 0.25) == pytest.approx(1.0)

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_inner_positive_definite(self, m):
        rng = np.random.default_rng(4)
        p = random_point(m, rng)
        c = random_tangent_coords(m, p, rng, 0.8)
        v = Tangent(base=p, coords=c)
        assert m.inner(p, v, v) > 0
        z = Tangent(base=p, coords=np.zeros(m.tangent_dim))
        assert m.inner(p, z, z) == 0.0

    def test_spd2_inner_trace_formula(self):
        m = Spd(2)
        p = np.eye(2).ravel()
        v = Tangent(base=p, coords=np.diag([1.0, -1.0]).ravel())
        assert m.inner(p, v, v) == pytest.approx(2.0, abs=1e-14)

    def test_euclidean_inner_orthogonal(self):
        m = Euclidean(3)
        p = np.zeros(3)
        u = Tangent(base=p, coords=np.array([1.0, 0.0, 0.0]))
        v = Tangent(base=p, coords=np.array([0.0, 1.0, 0.0]))
        assert m.inner(p, u, v) == 0.0

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_karcher_all_equal(self, m):
        p = random_point(m, np.random.default_rng(5))
        out = m.karcher_mean([p, p, p, p], [0.2, 0.3, 0.4, 0.1])
        assert np.allclose(out, p, atol=1e-12)

    def test_karcher_euclidean_mean(self):
        m = Euclidean(1)
        pts = [[0.0], [1.0], [2.0], [3.0]]
        assert m.karcher_mean(pts, [1, 1, 1, 1]) == pytest.approx(1.5)

    def test_karcher_spd_commuting_log_euclidean(self):
        m = Spd(2)
        pts = [np.eye(2).ravel(), np.diag([np.e**2, 1.0]).ravel()]
        out = m.karcher_mean(pts, [1.0, 1.0])
        np.testing.assert_allclose(
            out.reshape(2, 2), np.diag([np.e, 1.0]), atol=1e-8
        )
        # same through the iterative path (3 commuting points)
        pts3 = [np.eye(2).ravel(), np.diag([np.e**2, 1.0]).ravel(),
                np.diag([np.e, 1.0]).ravel()]
        out3 = m.karcher_mean(pts3, [1.0, 1.0, 2.0])
        np.testing.assert_allclose(
            out3.reshape(2, 2), np.diag([np.e, 1.0]), atol=1e-8
        )


class TestProperties:
    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_round_trip(self, m):
        rng = np.random.default_rng(10)
        for _ in range(20):
            p = random_point(m, rng)
            q = perturb(m, p, rng, 1.2)
            t = m.log(p, q)
            np.testing.assert_allclose(m.exp(p, t), q, atol=1e-8)
            assert m.norm(p, t) == pytest.approx(m.dist(p, q), abs=1e-8)

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_geodesic_speed(self, m):
        rng = np.random.default_rng(11)
        for _ in range(10):
            p = random_point(m, rng)
            q = perturb(m, p, rng, 1.0)
            d = m.dist(p, q)
            s, t = rng.uniform(0, 1, size=2)
            gs = m.geopoint(p, q, s)
            gt = m.geopoint(p, q, t)
            assert m.dist(gs, gt) == pytest.approx(abs(s - t) * d, abs=1e-8)

    def test_spd2_joint_convexity(self):
        m = Spd(2)
        rng = np.random.default_rng(12)
        for _ in range(20):
            x1, y1 = random_point(m, rng), random_point(m, rng)
            x2, y2 = random_point(m, rng), random_point(m, rng)
            t = rng.uniform()
            lhs = m.dist(m.geopoint(x1, y1, t), m.geopoint(x2, y2, t))
            rhs = (1 - t) * m.dist(x1, x2) + t * m.dist(y1, y2)
            assert lhs <= rhs + 1e-8

    @pytest.mark.parametrize("m", ALL_MANIFOLDS, ids=repr)
    def test_karcher_stationarity(self, m):
        rng = np.random.default_rng(13)
        base = random_point(m, rng)
        pts = np.stack([perturb(m, base, rng, 0.5) for _ in range(5)])
        w = rng.uniform(0.1, 1.0, size=5)
        f = m.karcher_mean(pts, w)
        logs = m._log(np.broadcast_to(f, pts.shape), pts)
        resid = np.einsum("k,kd->d", w, logs)
        nrm = np.sqrt(m._inner(f, resid, resid))
        assert nrm <= 1e-8 * w.sum()

    def test_spd_affine_invariance(self):
        rng = np.random.default_rng(14)
        for n in (2, 3):
            m = Spd(n)
            for _ in range(10):
                a = random_point(m, rng).reshape(n, n)
                b = random_point(m, rng).reshape(n, n)
                g = rng.standard_normal((n, n))
                while abs(np.linalg.det(g)) < 0.1:
                    g = rng.standard_normal((n, n))
                d0 = m.dist(a.ravel(), b.ravel())
                d1 = m.dist((g @ a @ g.T).ravel(), (g @ b @ g.T).ravel())
                assert d1 == pytest.approx(d0, abs=1e-8)

    def test_spd_against_scipy_oracle(self):
        rng = np.random.default_rng(15)
        for n in (2, 3):
            m = Spd(n)
            for _ in range(5):
                p = random_point(m, rng).reshape(n, n)
                q = random_point(m, rng).reshape(n, n)
                t = m.log(p.ravel(), q.ravel())
                np.testing.assert_allclose(
                    t.coords.reshape(n, n), spd_oracle_log(p, q), atol=1e-9
                )
                assert m.dist(p.ravel(), q.ravel()) == pytest.approx(
                    spd_oracle_dist(p, q), abs=1e-9
                )

    def test_batched_matches_single(self):
        rng = np.random.default_rng(16)
        for m in ALL_MANIFOLDS:
            P = np.stack([random_point(m, rng) for _ in range(7)])
            Q = np.stack([perturb(m, p, rng, 0.8) for p in P])
            d = m.dist(P, Q)
            for i in range(7):
                assert d[i] == pytest.approx(m.dist(P[i], Q[i]), abs=1e-14)
            g = m.geopoint(P, Q, np.full(7, 0.3))
            for i in range(7):
                np.testing.assert_allclose(
                    g[i], m.geopoint(P[i], Q[i], 0.3), atol=1e-13
                )


class TestErrors:
    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            Euclidean(3).dist([1.0, 2.0], [0.0, 0.0, 0.0])
        with pytest.raises(InvalidArgumentError):
            Spd(2).dist(np.eye(2).ravel(), np.eye(3).ravel())

    def test_exp_base_mismatch(self):
        m = Euclidean(2)
        t = Tangent(base=np.zeros(2), coords=np.ones(2))
        with pytest.raises(InvalidArgumentError):
            m.exp(np.ones(2), t)

    def test_inner_base_mismatch(self):
        m = Sphere(2)
        p = np.array([0.0, 0.0, 1.0])
        q = np.array([1.0, 0.0, 0.0])
        t = Tangent(base=p, coords=np.array([1.0, 0.0, 0.0]))
        s = Tangent(base=q, coords=np.array([0.0, 1.0, 0.0]))
        with pytest.raises(InvalidArgumentError):
            m.inner(p, t, s)

    def test_circle_antipodal(self):
        with pytest.raises(CutLocusError):
            Circle().log([0.0], [np.pi])

    def test_sphere_antipodal(self):
        m = Sphere(2)
        with pytest.raises(CutLocusError):
            m.log([0.0, 0.0, 1.0], [0.0, 0.0, -1.0])

    def test_karcher_zero_weights(self):
        m = Euclidean(1)
        with pytest.raises(InvalidArgumentError):
            m.karcher_mean([[0.0], [1.0]], [0.0, 0.0])
        with pytest.raises(InvalidArgumentError):
            m.karcher_mean([[0.0], [1.0]], [1.0, -0.5])

    def test_karcher_non_convergence_carries_iterate(self):
        m = Spd(2)
        rng = np.random.default_rng(17)
        pts = np.stack([random_point(m, rng, 1.5) for _ in range(4)])
        with pytest.raises(ConvergenceError) as exc:
            m.karcher_mean(pts, [1.0, 1.0, 1.0, 1.0], max_iter=0)
        assert exc.value.last_iterate is not None

    def test_membership_checks(self):
        Sphere(2).check_point([0.0, 0.0, 1.0])
        with pytest.raises(InvalidArgumentError):
            Sphere(2).check_point([0.0, 0.0, 1.5])
        with pytest.raises(InvalidArgumentError):
            Spd(2).check_point(np.diag([1.0, -1.0]).ravel())
        with pytest.raises(InvalidArgumentError):
            Spd(2).check_point(np.array([1.0, 0.5, -0.5, 1.0]))  # unsymmetric


def test_karcher_many_rows_match_single():
    m = Spd(2)
    rng = np.random.default_rng(18)
    pts = np.stack(
        [np.stack([random_point(m, rng, 0.4) for _ in range(4)]) for _ in range(6)]
    )
    w = rng.uniform(0.05, 1.0, size=(6, 4))
    batch = karcher_mean_many(m, pts, w)
    for i in range(6):
        single = m.karcher_mean(pts[i], w[i])
        np.testing.assert_allclose(batch[i], single, atol=1e-9)
