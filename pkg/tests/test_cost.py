import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlab.cost import CostModel, c_exp, check_conditions, cost_derivatives, eval_cost
from otlab.errors import DomainError, InvalidSpecError

BOX = [[-1.0, -1.0], [1.0, 1.0]]
KINDS = [{"kind": "quadratic-bilinear"}, {"kind": "squared-distance"},
         {"kind": "perturbed-bilinear", "delta": 0.05}, {"kind": "squared-bilinear"}]

coord = st.floats(-0.9, 0.9, allow_nan=False)
point = st.tuples(coord, coord).map(np.array)


def test_closed_forms():
    x, y = np.array([0.5, 0.2]), np.array([0.1, 0.3])
    assert CostModel("quadratic-bilinear", BOX, BOX).value(x, y) == pytest.approx(-0.11)
    assert CostModel("squared-distance", BOX, BOX).value(x, y) == pytest.approx(0.5 * 0.17)


def test_unknown_key_rejected():
    with pytest.raises(InvalidSpecError):
        CostModel.from_spec({"kind": "quadratic-bilinear", "shift": 1}, BOX, BOX)


def test_outside_box_is_domain_error():
    c = CostModel("quadratic-bilinear", BOX, BOX)
    with pytest.raises(DomainError):
        eval_cost(c, np.array([2.0, 0.0]), np.array([0.0, 0.0]))


@pytest.mark.parametrize("spec", KINDS)
@settings(max_examples=25, deadline=None)
@given(x=point, y=point)
def test_gradients_match_finite_differences(spec, x, y):
    c = CostModel.from_spec(spec, BOX, BOX)
    t = 1e-6
    fd_x = [(c.value(x + t * e, y) - c.value(x - t * e, y)) / (2 * t) for e in np.eye(2)]
    fd_y = [(c.value(x, y + t * e) - c.value(x, y - t * e)) / (2 * t) for e in np.eye(2)]
    np.testing.assert_allclose(c.grad_x(x, y), fd_x, atol=1e-6)
    np.testing.assert_allclose(c.grad_y(x, y), fd_y, atol=1e-6)


@pytest.mark.parametrize("spec", KINDS)
@settings(max_examples=15, deadline=None)
@given(x=point, y=point)
def test_mixed_hessian_matches_finite_differences(spec, x, y):
    c = CostModel.from_spec(spec, BOX, BOX)
    t = 1e-5
    fd = np.array([(c.grad_x(x, y + t * e) - c.grad_x(x, y - t * e)) / (2 * t)
                   for e in np.eye(2)]).T
    np.testing.assert_allclose(c.hess_xy(x, y), fd, atol=1e-5)


@pytest.mark.parametrize("spec", KINDS[:3])
@settings(max_examples=20, deadline=None)
@given(x=point, p=st.tuples(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4)).map(np.array))
def test_c_exp_inverts_the_gradient(spec, x, p):
    c = CostModel.from_spec(spec, BOX, BOX)
    y = c_exp(c, x, p)
    np.testing.assert_allclose(-c.grad_x(x, y), p, atol=1e-9)


def test_matrix_agrees_with_pointwise_values():
    c = CostModel("perturbed-bilinear", BOX, BOX, delta=0.02)
    rng = np.random.default_rng(0)
    X, Y = rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (4, 2))
    M = c.matrix(X, Y)
    ref = np.array([[c.value(x, y) for y in Y] for x in X])
    np.testing.assert_allclose(M, ref, rtol=0, atol=1e-14)


def test_conditions_for_bilinear_cost():
    rep = check_conditions(CostModel("quadratic-bilinear", BOX, BOX), n_samples=30)
    assert rep.c1_ok and rep.c2_ok
    assert rep.c3_min_absdet == pytest.approx(1.0)
    assert rep.delta_hat == pytest.approx(0.0, abs=1e-12)


def test_perturbation_size_is_reported():
    small = check_conditions(CostModel("perturbed-bilinear", BOX, BOX, delta=0.01), n_samples=30)
    large = check_conditions(CostModel("perturbed-bilinear", BOX, BOX, delta=0.05), n_samples=30)
    assert 0 < small.delta_hat < large.delta_hat


def test_cost_derivatives_bundle():
    c = CostModel("squared-distance", BOX, BOX)
    d = cost_derivatives(c, np.array([0.1, 0.2]), np.array([0.3, -0.1]))
    np.testing.assert_allclose(d.grad_x, [-0.2, 0.3])
    np.testing.assert_allclose(d.hess_xy, -np.eye(2))
