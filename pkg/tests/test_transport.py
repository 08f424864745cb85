import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from otlab.cost import CostModel
from otlab.errors import (InvalidParameterError, IterationLimitError, NondifferentiableError,
                          NotApplicableError, TooLargeError)
from otlab.grid import Grid
from otlab.transport import (AtomCloud, oracle_1d, read_plan, reconstruct_potential,
                             sample_density, solve_discrete, transport_map, write_plan)

BOX = [[-1.0, -1.0], [1.0, 1.0]]


def lp_reference(C, a, b):
    """Transport LP through HiGHS, an independent solver."""
    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A_eq[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs")
    return res.fun


def cloud(rng, n):
    w = rng.uniform(0.2, 1.0, n)
    return AtomCloud(rng.uniform(-1, 1, (n, 2)), w / w.sum(), BOX)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 9), m=st.integers(1, 9))
def test_exact_matches_lp_for_unequal_weights(seed, n, m):
    rng = np.random.default_rng(seed)
    cost = CostModel("squared-distance", BOX, BOX)
    src, tgt = cloud(rng, n), cloud(rng, m)
    plan = solve_discrete(cost, src, tgt)
    C = cost.matrix(src.positions, tgt.positions)
    assert plan.objective == pytest.approx(lp_reference(C, src.weights, tgt.weights), abs=1e-9)
    np.testing.assert_allclose(plan.row_sums(), src.weights, atol=1e-12)
    np.testing.assert_allclose(plan.col_sums(), tgt.weights, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_duals_are_feasible_and_tight_on_the_support(seed):
    rng = np.random.default_rng(seed)
    cost = CostModel("quadratic-bilinear", BOX, BOX)
    src, tgt = cloud(rng, 7), cloud(rng, 5)
    plan = solve_discrete(cost, src, tgt)
    C = cost.matrix(src.positions, tgt.positions)
    slack = plan.source_duals[:, None] - plan.target_duals[None, :] + C
    assert slack.min() >= -1e-12
    np.testing.assert_allclose(slack[plan.rows, plan.cols], 0.0, atol=1e-12)
    assert abs(plan.gap) <= 1e-8 * max(1.0, abs(plan.objective))


def test_identity_duals_are_canonical():
    src = sample_density({"kind": "uniform-box", "box": BOX}, 64)
    cost = CostModel("quadratic-bilinear", BOX, BOX)
    plan = solve_discrete(cost, src, src)
    y = src.positions
    # duals are unique up to a common constant
    shift = plan.target_duals + 0.5 * (y ** 2).sum(1)
    assert np.ptp(shift) <= 1e-12
    assert plan.gap == 0.0


def test_explicit_matrix_input():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    a = AtomCloud.uniform(np.array([[0.0], [1.0]]))
    plan = solve_discrete(C, a, a)
    assert plan.objective == 0.0


def test_weights_must_sum_to_one():
    with pytest.raises(InvalidParameterError):
        AtomCloud(np.zeros((2, 1)), np.array([0.3, 0.3]), [[-1.0], [1.0]])


def test_size_limit():
    big = AtomCloud.uniform(np.linspace(0, 1, 2001)[:, None])
    cost = CostModel("squared-distance", [[0.0], [1.0]], [[0.0], [1.0]])
    with pytest.raises(TooLargeError):
        solve_discrete(cost, big, big)


def test_sample_density_lattice():
    c = sample_density({"kind": "uniform-box", "box": [[0, 0], [1, 1]]}, 4)
    assert c.positions.tolist() == [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]]
    ball = sample_density({"kind": "uniform-ball", "center": [0, 0], "radius": 1}, 500)
    assert np.all(np.linalg.norm(ball.positions, axis=1) <= 1)
    assert abs(len(ball) - 500) <= 25


def test_entropic_plan_has_exact_marginals():
    rng = np.random.default_rng(0)
    cost = CostModel("squared-distance", BOX, BOX)
    src, tgt = cloud(rng, 12), cloud(rng, 9)
    plan = solve_discrete(cost, src, tgt, method="entropic", epsilon=0.05, tol=1e-9,
                          max_iter=20000)
    np.testing.assert_allclose(plan.row_sums(), src.weights, atol=1e-14)
    np.testing.assert_allclose(plan.col_sums(), tgt.weights, atol=1e-14)


def test_entropic_objective_close_to_exact():
    rng = np.random.default_rng(1)
    cost = CostModel("squared-distance", BOX, BOX)
    src, tgt = cloud(rng, 10), cloud(rng, 10)
    eps = 1e-3 * cost.scale()
    ent = solve_discrete(cost, src, tgt, method="entropic", epsilon=eps, tol=1e-6,
                         max_iter=200_000)
    ex = solve_discrete(cost, src, tgt)
    assert abs(ent.objective - ex.objective) <= 10 * eps * np.log(10)


def test_entropic_iteration_limit_reports_last_gap():
    rng = np.random.default_rng(2)
    cost = CostModel("squared-distance", BOX, BOX)
    src, tgt = cloud(rng, 6), cloud(rng, 6)
    with pytest.raises(IterationLimitError) as info:
        solve_discrete(cost, src, tgt, method="entropic", epsilon=1e-3, max_iter=3)
    assert info.value.last_gap > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 15))
def test_oracle_1d_matches_exact_solver(seed, n):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1, n)
    v = rng.uniform(0.1, 1, n + 1)
    src = AtomCloud(rng.uniform(0, 1, (n, 1)), w / w.sum(), [[0.0], [1.0]])
    tgt = AtomCloud(rng.uniform(0, 1, (n + 1, 1)), v / v.sum(), [[0.0], [1.0]])
    for kind in ("squared-distance", "quadratic-bilinear"):
        cost = CostModel(kind, [[0.0], [1.0]], [[0.0], [1.0]])
        orc = oracle_1d(cost, src, tgt)
        assert orc.objective == pytest.approx(solve_discrete(cost, src, tgt).objective,
                                              abs=1e-12)
        np.testing.assert_allclose(orc.row_sums(), src.weights, atol=1e-12)


def test_oracle_1d_antitone_orientation():
    # -(x y)^2 / 2 with x > 0 > y has positive mixed derivative -2 x y, so the
    # optimal matching reverses the order
    src = AtomCloud.uniform(np.array([[0.1], [0.4], [0.9]]))
    cost = CostModel("squared-bilinear", [[0.05], [1.0]], [[-1.0], [-0.05]])
    neg = AtomCloud.uniform(-src.positions)
    plan = oracle_1d(cost, src, neg)
    assert plan.assigned_target().tolist() == [0, 1, 2]
    assert plan.objective == pytest.approx(solve_discrete(cost, src, neg).objective)


def test_oracle_1d_rejects_higher_dimensions():
    c = AtomCloud.uniform(np.zeros((1, 2)))
    with pytest.raises(NotApplicableError):
        oracle_1d(CostModel("squared-distance", BOX, BOX), c, c)


def test_reconstruction_of_identity():
    box = [[0.0, 0.0], [1.0, 1.0]]
    src = sample_density({"kind": "uniform-box", "box": box}, 256)
    cost = CostModel("quadratic-bilinear", box, box)
    plan = solve_discrete(cost, src, src)
    grid = Grid.from_box(box, 32)  # two cells per atom
    u = reconstruct_potential(plan, cost, src, grid)
    dev = u.values - 0.5 * (grid.centers ** 2).sum(-1)
    assert np.ptp(dev) <= 1e-12


def test_transport_map_and_kinks():
    src = AtomCloud.uniform(np.array([[-0.5], [0.5]]), [[-1.0], [1.0]])
    cost = CostModel("quadratic-bilinear", [[-1.0], [1.0]], [[-1.0], [1.0]])
    plan = solve_discrete(cost, src, src)
    u = reconstruct_potential(plan, cost, src, Grid([-1.0], [1.0], [64]))
    np.testing.assert_allclose(transport_map(u, np.array([0.6])), [0.5], atol=1e-12)
    with pytest.raises(NondifferentiableError):
        transport_map(u, np.array([0.0]))


def test_refuses_coarse_entropic_duals():
    rng = np.random.default_rng(3)
    cost = CostModel("squared-distance", BOX, BOX)
    src = cloud(rng, 5)
    plan = solve_discrete(cost, src, src, method="entropic", epsilon=0.1, max_iter=50_000)
    with pytest.raises(InvalidParameterError):
        reconstruct_potential(plan, cost, src, Grid.from_box(BOX, 16))


def test_plan_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    cost = CostModel("squared-distance", BOX, BOX)
    plan = solve_discrete(cost, cloud(rng, 6), cloud(rng, 4))
    write_plan(tmp_path / "p.csv", plan)
    rows, cols, mass = read_plan(tmp_path / "p.csv")
    assert rows.tolist() == plan.rows.tolist() and cols.tolist() == plan.cols.tolist()
    np.testing.assert_array_equal(mass, plan.mass)
