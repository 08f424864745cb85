import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlab.cconvex import section_extract
from otlab.cost import CostModel
from otlab.errors import InvalidParameterError
from otlab.geometry import AffineMap, convex_envelope, convex_hull, john_normalize, mvee, vitali_cover
from otlab.grid import Grid
from otlab.potential import PotentialField

BOX = [[-1.0, -1.0], [1.0, 1.0]]


def test_hull_of_square():
    pts = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]], dtype=float)
    hull = convex_hull(pts)
    assert hull.volume == pytest.approx(1.0)
    assert hull.contains(np.array([[0.2, 0.9], [1.2, 0.5]])).tolist() == [True, False]


def test_collinear_points_are_degenerate():
    hull = convex_hull(np.array([[0, 0], [1, 1], [2, 2]], dtype=float))
    assert hull.degenerate


@pytest.mark.parametrize("method", ["newton", "khachiyan"])
def test_mvee_of_square_is_circumscribed_circle(method):
    c, Q = mvee(np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float), method=method)
    np.testing.assert_allclose(c, 0, atol=1e-6)
    np.testing.assert_allclose(Q, np.eye(2) / 2, atol=1e-5)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mvee_is_affine_equivariant(seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(30, 2))
    A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    b = rng.normal(size=2)
    c, Q = mvee(P, tol=1e-10)
    c2, Q2 = mvee(P @ A.T + b, tol=1e-10)
    Ai = np.linalg.inv(A)
    np.testing.assert_allclose(c2, A @ c + b, atol=1e-5)
    np.testing.assert_allclose(Q2, Ai.T @ Q @ Ai, rtol=1e-4, atol=1e-5)
    # every point inside, some on the boundary
    r = np.einsum("ij,jk,ik->i", P - c, Q, P - c)
    assert r.max() == pytest.approx(1.0, abs=1e-5)


def test_newton_and_khachiyan_agree():
    P = np.random.default_rng(5).uniform(-1, 1, (40, 2))
    c1, Q1 = mvee(P, tol=1e-9)
    c2, Q2 = mvee(P, tol=1e-9, method="khachiyan")
    np.testing.assert_allclose(c1, c2, atol=1e-4)
    np.testing.assert_allclose(Q1, Q2, rtol=1e-3)


def test_affine_map_rejects_singular_matrix():
    with pytest.raises(InvalidParameterError):
        AffineMap(np.array([[1.0, 2.0], [2.0, 4.0]]), np.zeros(2))


def test_john_normalize_of_ball_section():
    g = Grid.from_box(BOX, 96)
    cost = CostModel("quadratic-bilinear", BOX, BOX)
    u = PotentialField.from_callable(lambda x: 0.5 * (x ** 2).sum(-1), g, cost)
    x0 = g.center_of((48, 48))
    s = section_extract(u, cost, x0, x0, 0.08)
    T, rep = john_normalize(s, 0.08)
    # a disc needs no stretching: A is a multiple of the identity with det 1
    np.testing.assert_allclose(T.A, np.eye(2), atol=0.05)
    assert rep.ratio <= 1.2
    assert rep.r_out == pytest.approx(np.sqrt(0.16), rel=0.1)


def test_envelope_of_convex_function_is_itself():
    g = Grid.from_box(BOX, 24)
    phi = (g.centers ** 2).sum(-1)
    env = convex_envelope(phi, np.ones(g.shape, bool), g)
    np.testing.assert_allclose(env.values, phi, atol=1e-12)
    assert env.contact.all()


def test_envelope_of_double_well():
    g = Grid([-1.0], [1.0], [100])
    x = g.centers[..., 0]
    phi = (x ** 2 - 0.25) ** 2
    env = convex_envelope(phi, np.ones(g.shape, bool), g)
    # the hull fills the well between the minima at +-1/2 with zero
    inside = np.abs(x) < 0.5 - g.spacing
    np.testing.assert_allclose(env.values[inside], 0.0, atol=1e-3)
    assert not env.contact[inside & (np.abs(x) < 0.4)].any()
    assert np.all(env.values <= phi + 1e-12)


def test_vitali_rejects_bad_sigma():
    with pytest.raises(InvalidParameterError):
        vitali_cover([], sigma=1.5)


def test_vitali_keeps_disjoint_candidates():
    g = Grid.from_box(BOX, 64)
    cost = CostModel("quadratic-bilinear", BOX, BOX)
    u = PotentialField.from_callable(lambda x: 0.5 * (x ** 2).sum(-1), g, cost)
    far = [section_extract(u, cost, g.center_of(i), g.center_of(i), 0.01)
           for i in [(10, 10), (50, 50), (10, 50)]]
    sel, rep = vitali_cover(far)
    assert sorted(sel) == [0, 1, 2]
    assert rep.disjoint_ok and rep.cover_ok
