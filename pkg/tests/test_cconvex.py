import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlab.cconvex import (c_subdiff, c_transform, double_c_transform, frechet_subdiff,
                           kink_mask, section_extract, semiconvexity_constant)
from otlab.cost import CostModel
from otlab.errors import InvalidSectionError
from otlab.grid import Grid
from otlab.potential import PotentialField, read_potential, write_potential
from otlab.transport import AtomCloud, reconstruct_potential, solve_discrete

BOX = [[-1.0, -1.0], [1.0, 1.0]]
COST = CostModel("quadratic-bilinear", BOX, BOX)


def quadratic(grid, a=1.0):
    return PotentialField.from_callable(lambda x: 0.5 * a * (x ** 2).sum(-1), grid, COST)


def test_c_transform_of_half_square_norm():
    # for c = -x.y the transform is the Legendre transform: (|x|^2/2)^* = |y|^2/2
    g = Grid.from_box(BOX, 64)
    u = quadratic(g)
    y = np.array([[0.3, -0.2], [0.0, 0.0], [-0.6, 0.5]])
    uc = c_transform(u, COST, y)
    exact = 0.5 * (y ** 2).sum(1)
    # a grid maximum misses the true one by at most |y - x_grid|^2/2
    assert np.all(uc.values <= exact + 1e-12)
    assert np.all(uc.values >= exact - g.spacing ** 2)


def test_double_transform_is_idempotent_on_atomic_potentials():
    rng = np.random.default_rng(0)
    src = AtomCloud.uniform(rng.uniform(-1, 1, (12, 2)), BOX)
    tgt = AtomCloud.uniform(rng.uniform(-1, 1, (12, 2)), BOX)
    plan = solve_discrete(COST, src, tgt)
    u = reconstruct_potential(plan, COST, tgt, Grid.from_box(BOX, 32))
    # with the atoms among the dual points the double transform is exact
    pts = np.concatenate([tgt.positions, Grid.from_box(BOX, 8).flat_centers])
    np.testing.assert_allclose(double_c_transform(u, COST, pts), u.values, atol=1e-12)


def test_frechet_subdiff_of_abs():
    g = Grid([-1.0], [1.0], [64])
    u = PotentialField.from_callable(lambda x: np.abs(x[:, 0]), g, CostModel(
        "quadratic-bilinear", [[-1.0], [1.0]], [[-1.0], [1.0]]))
    kink = frechet_subdiff(u, np.array([g.center_of((32,))[0]]))
    assert not kink.single_valued
    smooth = frechet_subdiff(u, np.array([0.5]))
    assert smooth.single_valued
    np.testing.assert_allclose(smooth.gradient, [1.0])


def test_kink_mask_finds_the_crease():
    g = Grid.from_box(BOX, 32)
    u = PotentialField.from_callable(lambda x: np.abs(x[:, 0]), g, COST)
    k = kink_mask(u)
    cols = np.unique(np.argwhere(k)[:, 0])
    assert set(cols) <= {15, 16}
    assert k.any()
    assert not kink_mask(quadratic(g)).any()


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2.0, -0.1))
def test_semiconvexity_constant_of_concave_quadratic(a):
    # u = a|x|^2/2 needs K = -a/2 for u + K|x|^2 to be convex
    g = Grid.from_box(BOX, 32)
    K = semiconvexity_constant(quadratic(g, a), g.spacing)
    assert K == pytest.approx(-a / 2, rel=1e-9)


def test_section_of_quadratic_is_a_ball():
    g = Grid.from_box(BOX, 64)
    u = quadratic(g)
    x0 = g.center_of((40, 20))
    s = section_extract(u, COST, x0, x0, 0.05)
    d2 = ((g.centers - x0) ** 2).sum(-1) / 2
    np.testing.assert_array_equal(s.cells, d2 <= 0.05 + 1e-9)
    assert s.connected


def test_section_rejects_targets_outside_the_subdifferential():
    g = Grid.from_box(BOX, 32)
    u = quadratic(g)
    x0 = g.center_of((10, 10))
    with pytest.raises(InvalidSectionError):
        section_extract(u, COST, x0, x0 + 0.3, 0.05)


def test_c_subdiff_at_a_tie():
    # u(x) = max(x/2, -x/2) = |x|/2: both atoms are active at 0, one elsewhere
    cost = CostModel("quadratic-bilinear", [[-1.0], [1.0]], [[-1.0], [1.0]])
    u = PotentialField(cost, Grid([-1.0], [1.0], [16]), atoms=np.array([[-0.5], [0.5]]),
                       lambdas=np.zeros(2))
    assert c_subdiff(u, cost, np.array([0.0]))[0].tolist() == [0, 1]
    idx, ys = c_subdiff(u, cost, np.array([0.3]))
    assert idx.tolist() == [1] and ys.tolist() == [[0.5]]


def test_potential_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    tgt = AtomCloud.uniform(rng.uniform(-1, 1, (9, 2)), BOX)
    plan = solve_discrete(COST, tgt, tgt)
    u = reconstruct_potential(plan, COST, tgt, Grid.from_box(BOX, 16))
    write_potential(tmp_path / "u.csv", u)
    v, header = read_potential(tmp_path / "u.csv")
    np.testing.assert_array_equal(v.values, u.values)
    assert header["dimension"] == 2
