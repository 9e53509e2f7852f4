import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dissolve.sets import (
    Box,
    DimensionMismatch,
    DomainViolation,
    LinearInequalities,
    NonnegOrthant,
    NormBall,
    Product,
    PsdCone,
    SecondOrderCone,
    Simplex,
    SpectralBall,
    set_from_json,
)

from conftest import make_catalog, sample_point, sample_smooth_point


# ---------------------------------------------------------------- projection


def test_box_projection_clamps():
    assert np.allclose(Box([0, 0], [1, 1]).project([2, -3]), [1, 0])


def test_l2_ball_projection_scales_radially():
    assert np.allclose(NormBall(2).project([3, 4]), [0.6, 0.8])


def simplex_projection_oracle(x):
    # KKT: w = max(x - tau, 0) with tau solving sum(max(x - tau, 0)) = 1
    from scipy.optimize import brentq

    x = np.asarray(x, dtype=float)
    f = lambda tau: np.sum(np.maximum(x - tau, 0.0)) - 1.0
    tau = brentq(f, x.min() - 1.0, x.max(), xtol=1e-15)
    return np.maximum(x - tau, 0.0)


def test_simplex_projection_matches_kkt_oracle():
    assert np.allclose(Simplex(2).project([2, 0]), [1, 0], atol=1e-12)
    rng = np.random.default_rng(3)
    s = Simplex(6)
    for _ in range(25):
        x = rng.standard_normal(6) * 2.0
        assert np.allclose(s.project(x), simplex_projection_oracle(x), atol=1e-10)


def test_psd_projection_clips_eigenvalues():
    X = np.array([[1.0, 0.0], [0.0, -1.0]])
    out = PsdCone(2).project(X.reshape(-1, order="F"))
    assert np.allclose(out.reshape(2, 2, order="F"), [[1, 0], [0, 0]])


def test_second_order_cone_projection_cases():
    soc = SecondOrderCone(2)
    assert np.allclose(soc.project([0.1, 0.0, 1.0]), [0.1, 0.0, 1.0])
    assert np.allclose(soc.project([0.1, 0.0, -1.0]), [0.0, 0.0, 0.0])
    out = soc.project([1.0, 0.0, 0.0])
    assert np.allclose(out, [0.5, 0.0, 0.5])


def test_lq_ball_projection_satisfies_kkt():
    ball = NormBall(4, radius=1.0, exponent=3.0)
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.standard_normal(4) * 2.0
        y = ball.project(x)
        assert np.sum(np.abs(y) ** 3.0) <= 1.0 + 1e-10
        # stationarity: x - y parallel to the norm gradient at y
        g = np.sign(y) * np.abs(y) ** 2.0
        r = x - y
        lam = (r @ g) / (g @ g)
        assert lam > 0
        assert np.linalg.norm(r - lam * g) < 1e-7


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=20, deadline=None)
def test_projection_nonexpansive_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    for domain in make_catalog():
        a = rng.standard_normal(domain.n) * 1.5
        b = rng.standard_normal(domain.n) * 1.5
        pa, pb = domain.project(a), domain.project(b)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9
        assert np.linalg.norm(domain.project(pa) - pa) <= 1e-9


# ---------------------------------------------------------------- contains


def test_contains_examples():
    assert Simplex(3).contains([1 / 3, 1 / 3, 1 / 3], tol=0.0)
    assert not NormBall(2).contains([1 + 1e-3, 0.0], tol=1e-6)
    assert Box([0.0], [np.inf]).contains([-1e-9], tol=1e-8)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionMismatch):
        NormBall(3).project([1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        Simplex(2).q_apply([0.5, 0.5], [1.0])


# ---------------------------------------------------------------- affine hull


def test_affine_hull_projector_examples():
    assert np.allclose(Box([0.0, -1.0], [1.0, 2.0]).affine_hull_projector(), np.eye(2))
    assert np.allclose(Simplex(2).affine_hull_projector(),
                       [[0.5, -0.5], [-0.5, 0.5]])
    prod = Product([Box([0.0], [1.0]), Simplex(2)])
    expect = np.zeros((3, 3))
    expect[0, 0] = 1.0
    expect[1:, 1:] = [[0.5, -0.5], [-0.5, 0.5]]
    assert np.allclose(prod.affine_hull_projector(), expect)


def test_affine_hull_projector_idempotent_symmetric(catalog):
    for domain in catalog:
        P = domain.affine_hull_projector()
        assert np.abs(P - P.T).max() <= 1e-12
        assert np.abs(P @ P - P).max() <= 1e-12


# ---------------------------------------------------------------- Q mapping


def test_q_apply_examples():
    ball = NormBall(2)
    assert np.allclose(ball.q_apply([0.0, 0.0], [0.3, -0.7]), [0.3, -0.7])
    assert np.allclose(ball.q_apply([1.0, 0.0], [1.0, 1.0]), [0.0, 1.0])
    assert np.allclose(Simplex(2).q_apply([1.0, 0.0], [0.4, 0.6]), [0.0, 0.0])
    pc = PsdCone(2)
    Y = np.array([[0.3, 0.1], [0.1, -0.2]])
    out = pc.q_apply(np.eye(2).reshape(-1, order="F"), Y.reshape(-1, order="F"))
    assert np.allclose(out.reshape(2, 2, order="F"), Y)


def test_q_matrix_examples():
    assert np.allclose(NonnegOrthant(2).q_matrix([3.0, 0.0]), np.diag([3.0, 0.0]))
    # hand evaluation: M = Diag(x) - xx^T = [[.25,-.25],[-.25,.25]], squared
    assert np.allclose(Simplex(2).q_matrix([0.5, 0.5]),
                       [[0.125, -0.125], [-0.125, 0.125]])
    sb = SpectralBall(2, 2)
    assert np.allclose(sb.q_matrix(np.zeros(4)), np.eye(4))


def test_q_apply_rejects_points_outside_domain():
    with pytest.raises(DomainViolation):
        NormBall(2).q_apply([2.0, 0.0], [1.0, 0.0])
    with pytest.raises(DomainViolation):
        Simplex(3).q_apply([0.5, 0.1, 0.1], [1.0, 0.0, 0.0])


def test_q_symmetric_psd_on_samples(catalog):
    rng = np.random.default_rng(11)
    for domain in catalog:
        for _ in range(100):
            x = sample_point(domain, rng)
            Q = domain.q_matrix(x)
            assert np.abs(Q - Q.T).max() <= 1e-12
            assert np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() >= -1e-10


def _null_space(Q, tol=1e-8):
    vals, vecs = np.linalg.eigh(0.5 * (Q + Q.T))
    scale = max(1.0, np.abs(vals).max())
    return vecs[:, np.abs(vals) <= tol * scale]


def _span_projector(basis):
    if basis.size == 0:
        return np.zeros((basis.shape[0], basis.shape[0]))
    U, _ = np.linalg.qr(basis)
    return U @ U.T


def test_null_space_matches_normal_cone_span():
    # boundary points with known facial structure
    cases = []
    box = Box([-1.0, 0.0, -np.inf], [1.5, 2.0, np.inf])
    cases.append((box, np.array([-1.0, 2.0, 0.3]),
                  np.eye(3)[:, [0, 1]]))
    orth = NonnegOrthant(4)
    cases.append((orth, np.array([0.0, 1.2, 0.0, 0.5]),
                  np.eye(4)[:, [0, 2]]))
    ball = NormBall(3, radius=1.5)
    xb = 1.5 * np.array([3.0, -1.0, 1.0]) / np.linalg.norm([3.0, -1.0, 1.0])
    cases.append((ball, xb, xb[:, None]))
    simplex = Simplex(4)
    xs = np.array([0.6, 0.4, 0.0, 0.0])
    normals = np.column_stack([np.ones(4), np.eye(4)[:, 2], np.eye(4)[:, 3]])
    cases.append((simplex, xs, normals))
    lq = NormBall(3, radius=1.0, exponent=4.0)
    xq = np.array([0.7, -0.5, 0.4])
    xq /= np.sum(np.abs(xq) ** 4.0) ** 0.25
    wq = np.sign(xq) * np.abs(xq) ** 3.0  # norm gradient spans the normal ray
    cases.append((lq, xq, wq[:, None]))
    for domain, x, normal_basis in cases:
        Pn = _span_projector(normal_basis)
        Pq = _span_projector(_null_space(domain.q_matrix(x)))
        assert np.abs(Pn - Pq).max() < 1e-7, domain.kind


def test_box_pinned_coordinate():
    # a coordinate with lower == upper is pinned: projection fixes it, the
    # mapping weight vanishes, and the hull projector drops the direction
    box = Box([0.0, 1.0], [2.0, 1.0])
    assert np.allclose(box.project([5.0, 5.0]), [2.0, 1.0])
    assert np.allclose(box.q_matrix([0.5, 1.0]), np.diag([0.75, 0.0]))
    assert np.allclose(box.affine_hull_projector(), np.diag([1.0, 0.0]))
    p = box.normal_cone_project(np.array([0.5, 1.0]), np.array([0.3, -0.7]))
    assert np.allclose(p, [0.0, -0.7])  # pinned directions are fully normal


def test_normal_cone_projection_optimality():
    # projection onto a closed convex cone: idempotent and orthogonal residual
    rng = np.random.default_rng(19)
    for domain in make_catalog():
        for _ in range(20):
            x = domain.project(1.2 * rng.standard_normal(domain.n))
            z = 2.0 * rng.standard_normal(domain.n)
            p = domain.normal_cone_project(x, z)
            scale = max(1.0, np.linalg.norm(z))
            p2 = domain.normal_cone_project(x, p)
            assert np.linalg.norm(p2 - p) <= 1e-8 * scale, domain.kind
            assert abs((z - p) @ p) <= 1e-8 * scale ** 2, domain.kind


def test_simplex_normal_cone_projection_kkt_conditions():
    # N = {g : g_i = t on the support, g_i <= t off it}; optimality of the
    # projection needs <z - p, ones> = 0 and z - p >= 0 off the support
    s = Simplex(5)
    x = np.array([0.3, 0.0, 0.45, 0.25, 0.0])
    rng = np.random.default_rng(23)
    for _ in range(25):
        z = 3.0 * rng.standard_normal(5)
        p = s.normal_cone_project(x, z)
        on = x > 1e-8
        assert np.ptp(p[on]) <= 1e-12
        assert np.all(p[~on] <= p[on].max() + 1e-12)
        assert abs(np.sum(z - p)) <= 1e-10
        assert np.all((z - p)[~on] >= -1e-12)


def test_normal_cone_projection_interior_is_zero():
    ball = NormBall(3, radius=2.0)
    assert np.array_equal(ball.normal_cone_project(np.zeros(3), np.ones(3)),
                          np.zeros(3))
    orth = NonnegOrthant(2)
    assert np.array_equal(orth.normal_cone_project(np.array([1.0, 2.0]),
                                                   np.array([-3.0, 4.0])),
                          np.zeros(2))
    soc = SecondOrderCone(2)
    apex = np.zeros(3)
    z = np.array([0.3, -0.1, 0.2])
    # at the apex the cone's polar absorbs the polar part of z exactly
    p = soc.normal_cone_project(apex, z)
    assert np.allclose(p, z - soc.project(z))


# ---------------------------------------------------------------- derivatives


def test_dq_apply_examples():
    ball = NormBall(2)
    assert np.allclose(ball.dq_apply([1.0, 0.0], [0.0, 1.0], [1.0, 0.0]), [0.0, -1.0])
    pc = PsdCone(2)
    I4 = np.eye(2).reshape(-1, order="F")
    assert np.allclose(pc.dq_apply(I4, I4, I4).reshape(2, 2, order="F"), 2 * np.eye(2))
    for domain in (ball, Simplex(3), SecondOrderCone(2)):
        rng = np.random.default_rng(0)
        x = sample_point(domain, rng)
        v = rng.standard_normal(domain.n)
        assert np.allclose(domain.dq_apply(x, np.zeros(domain.n), v), 0.0)


def test_dq_matches_finite_differences(catalog):
    rng = np.random.default_rng(7)
    eps = np.cbrt(np.finfo(float).eps)
    for domain in catalog:
        for _ in range(50):
            x = sample_smooth_point(domain, rng)
            d = rng.standard_normal(domain.n)
            d /= np.linalg.norm(d)
            v = rng.standard_normal(domain.n)
            step = eps * (1.0 + np.linalg.norm(x))
            fd = (domain.q_apply(x + step * d, v, validate=False)
                  - domain.q_apply(x - step * d, v, validate=False)) / (2 * step)
            an = domain.dq_apply(x, d, v, validate=False)
            assert np.linalg.norm(an - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd)), domain.kind


def test_dq_form_grad_is_adjoint_of_dq_apply(catalog):
    rng = np.random.default_rng(13)
    for domain in catalog:
        for _ in range(10):
            x = sample_point(domain, rng)
            v = rng.standard_normal(domain.n)
            w = rng.standard_normal(domain.n)
            g = domain.dq_form_grad(x, v, w)
            probe = np.array([w @ domain.dq_apply(x, e, v, validate=False)
                              for e in np.eye(domain.n)])
            assert np.abs(g - probe).max() <= 1e-10 * max(1.0, np.abs(probe).max())


def test_lq_ball_derivative_domain_error_below_two():
    ball = NormBall(2, radius=1.0, exponent=1.5)
    with pytest.raises(DomainViolation):
        ball.dq_apply([0.5, 0.0], [1.0, 1.0], [1.0, 1.0])
    out = ball.dq_apply([0.4, 0.3], [1.0, 1.0], [1.0, 1.0])
    assert np.all(np.isfinite(out))


# ---------------------------------------------------------------- serialization


def test_json_roundtrip(catalog):
    rng = np.random.default_rng(17)
    for domain in catalog:
        rebuilt = set_from_json(json.loads(json.dumps(domain.to_json())))
        assert rebuilt.kind == domain.kind
        assert rebuilt.n == domain.n
        x = rng.standard_normal(domain.n)
        assert np.array_equal(rebuilt.project(x), domain.project(x))


def test_invalid_construction():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    with pytest.raises(ValueError):
        NormBall(2, radius=-1.0)
    with pytest.raises(ValueError):
        NormBall(2, radius=1.0, exponent=1.0)
    with pytest.raises(ValueError):
        LinearInequalities(np.zeros((3, 1)), np.array([1.0]))
