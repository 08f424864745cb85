import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlab.cconvex import section_extract
from otlab.cost import CostModel
from otlab.errors import InsufficientResolutionError, InvalidParameterError
from otlab.grid import Grid
from otlab.potential import PotentialField
from otlab.regularity.boundary import boundary_heights, is_convex_cells
from otlab.regularity.decay import levelset_decay, radii
from otlab.regularity.density import section_density_estimate
from otlab.regularity.engulfing import engulfing_estimate
from otlab.regularity.hessian import hessian_field
from otlab.regularity.singular import singular_detect
from otlab.regularity.w2p import w2p_norm

BOX = [[-1.0, -1.0], [1.0, 1.0]]
COST = CostModel("quadratic-bilinear", BOX, BOX)


def field(func, res=48):
    return PotentialField.from_callable(func, Grid.from_box(BOX, res), COST)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.2, 3.0), b=st.floats(0.2, 3.0), c=st.floats(-0.5, 0.5))
def test_hessian_of_quadratic_is_exact(a, b, c):
    # second differences are exact on quadratics, including the mixed term
    A = np.array([[a, c], [c, b]])
    u = field(lambda x: 0.5 * np.einsum("ni,ij,nj->n", x, A, x))
    H = hessian_field(u, 2)
    assert H.valid.any()
    np.testing.assert_allclose(H.matrices[H.valid], np.broadcast_to(A, H.matrices[H.valid].shape),
                               atol=1e-9)
    np.testing.assert_allclose(H.norm[H.valid], np.abs(np.linalg.eigvalsh(A)).max(), rtol=1e-9)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_w2p_of_constant_hessian(p):
    u = field(lambda x: (x ** 2).sum(-1), res=64)  # D^2u = 2 I
    H = hessian_field(u, 1)
    region = H.valid & u.grid.ball_mask([0, 0], 0.5)
    r = w2p_norm(H, region, p)
    area = region.sum() * u.grid.cell_volume
    assert r.direct == pytest.approx(2.0 ** p * area, rel=1e-9)
    assert r.bound >= r.direct


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), p=st.floats(1.0, 6.0))
def test_layer_cake_bound_dominates(seed, p):
    rng = np.random.default_rng(seed)
    coef = rng.uniform(0.5, 30.0, 3)
    u = field(lambda x: coef[0] * np.sin(coef[1] * x[:, 0]) * np.cos(x[:, 1] * coef[2]) / 10)
    H = hessian_field(u, 1)
    r = w2p_norm(H, H.valid, p, M=4.0)
    assert r.bound >= r.direct * (1 - 1e-12)


def test_engulfing_constant_of_balls():
    # sections of |x|^2/2 are balls; the worst pair sits on the rim, giving C = 4
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=96)
    tab = engulfing_estimate(u, COST, 40, [0.01, 0.04], seed=0)
    assert tab.max_C <= 4.0 + 0.2
    assert tab.max_C >= 3.0


def test_singular_set_of_smooth_potential_is_empty():
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=32)
    S = singular_detect(u, COST, 0.05, region=u.grid.ball_mask([0, 0], 0.6))
    assert S.measure == 0.0


def test_singular_set_follows_a_crease():
    # slope jump 4 across x_1 = 0, well above the kink threshold 10 dx (1 + K)
    u = field(lambda x: 0.5 * (x ** 2).sum(-1) + 2.0 * np.abs(x[:, 0]), res=32)
    region = u.grid.ball_mask([0, 0], 0.6)
    S = singular_detect(u, COST, 0.05, region=region)
    x = u.grid.centers[..., 0]
    assert S.cells.any()
    assert np.all(np.abs(x[S.cells]) <= 2.5 * u.grid.spacing)


def test_boundary_heights_on_a_disc():
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=48)
    g = u.grid
    X = g.ball_mask([0, 0], 0.8)
    assert is_convex_cells(X, g)
    prof = boundary_heights(u, COST, X, 0.5, K_bands=3)
    inner = X & ~np.isnan(prof.hbar) & (prof.hbar > 0)
    r = 0.8 - np.linalg.norm(g.centers[inner], axis=1)
    # the nearest outside center is within a cell of the circle
    assert np.all(np.abs(np.sqrt(2 * prof.hbar[inner]) - r) <= g.spacing)


def test_density_needs_enough_cells():
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=32)
    x0 = u.grid.center_of((16, 16))
    tiny = section_extract(u, COST, x0, x0, 1e-4)
    with pytest.raises(InsufficientResolutionError):
        section_density_estimate(u, COST, tiny, 2.0)


def test_density_of_constant_hessian():
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=64)
    x0 = u.grid.center_of((32, 32))
    s = section_extract(u, COST, x0, x0, 0.05)
    est = section_density_estimate(u, COST, s, 2.0)
    # ||D^2u|| = 1 equals the normalized size of a disc, so nothing is bad
    assert est.bad_fraction == 0.0
    assert est.band_fraction == pytest.approx(1.0, abs=0.05)


def test_decay_precondition():
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=32)
    with pytest.raises(InvalidParameterError):
        levelset_decay(u, COST, M=3.0, N=2.0, K_levels=2, rho0=0.5)


def test_radii_shrink_and_stop():
    r = radii(0.8, 0.1, 4.0, 0.5, 5)
    assert r[0] == 0.8
    assert all(a > b for a, b in zip(r, r[1:]))
    assert radii(0.8, 1.0, 4.0, 0.1, 5) == [0.8]


def test_decay_of_smooth_potential_is_trivial():
    u = field(lambda x: 0.5 * (x ** 2).sum(-1), res=48)
    tab = levelset_decay(u, COST, 4.0, 2.0, 2, 0.6)
    # ||D^2u|| = 1 < M: every superlevel set beyond k = 0 is empty
    assert tab.measures[0] > 0
    assert all(m == 0.0 for m in tab.measures[1:])
    assert tab.fraction(1) == 0.0
