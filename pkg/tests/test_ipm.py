import numpy as np
import pytest

from graphtee.core.exceptions import ContractError, EvaluationError, ParameterError, ShapeError
from graphtee.ndgrad import ModelParams, Tape, Tensor, grad_check
from graphtee.services.ipm import (
    balance_term,
    bounded_ipm_exact,
    dependence_term,
    exact_w1_1d,
    exact_w1_assignment,
    pairwise_cost,
    sinkhorn_w1,
)


class TestPairwiseCost:
    def test_euclidean_distances(self):
        cost = pairwise_cost(Tensor([[0.0, 0.0], [3.0, 4.0]]), Tensor([[0.0, 0.0]]))
        np.testing.assert_allclose(cost.data, [[0.0], [5.0]])


class TestSinkhorn:
    def test_identical_clouds_are_close(self):
        points = np.random.default_rng(0).standard_normal((6, 2))
        result = sinkhorn_w1(points, points, eps=0.01, iters=500)
        assert result.value.item() < 0.05

    def test_shifted_cloud(self):
        # uniform shift by 2 along the first axis: W1 = 2
        points = np.random.default_rng(1).standard_normal((5, 2))
        result = sinkhorn_w1(points, points + np.array([2.0, 0.0]), eps=0.02, iters=1000)
        assert result.value.item() == pytest.approx(2.0, abs=0.1)

    def test_approaches_exact_value_on_the_line(self):
        rng = np.random.default_rng(2)
        a, b = rng.standard_normal(8), rng.standard_normal(8) + 0.5
        result = sinkhorn_w1(a, b, eps=0.01, iters=2000)
        assert result.value.item() == pytest.approx(exact_w1_1d(a, b), abs=0.05)

    def test_matches_assignment_oracle(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
        result = sinkhorn_w1(a, b, eps=0.02, iters=2000)
        assert result.value.item() == pytest.approx(exact_w1_assignment(a, b), abs=0.1)

    def test_marginal_violation_shrinks(self):
        rng = np.random.default_rng(4)
        result = sinkhorn_w1(rng.standard_normal((7, 2)), rng.standard_normal((5, 2)), eps=0.5, iters=200)
        assert len(result.history) == 200
        assert result.violation == result.history[-1]
        assert result.history[-1] < result.history[0]
        assert result.violation < 1e-3

    def test_relative_eps_scales_with_median_cost(self):
        rng = np.random.default_rng(5)
        a, b = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
        result = sinkhorn_w1(a, b, eps=0.1, iters=5, relative=True)
        median = np.median(pairwise_cost(Tensor(a), Tensor(b)).data)
        assert result.eps == pytest.approx(0.1 * median)

    def test_single_point_is_mean_distance(self):
        result = sinkhorn_w1(np.array([[0.0]]), np.array([[1.0], [3.0]]))
        assert result.value.item() == pytest.approx(2.0)

    def test_gradient_flows_through_the_iterations(self):
        rng = np.random.default_rng(6)
        params = ModelParams({"a": rng.standard_normal((4, 2))})
        target = rng.standard_normal((3, 2))

        def loss(p):
            return sinkhorn_w1(p["a"], target, eps=0.5, iters=15).value

        report = grad_check(loss, params)
        assert report.passed, report.to_dict()

    def test_parameter_ranges(self):
        with pytest.raises(ParameterError):
            sinkhorn_w1(np.ones((2, 1)), np.ones((2, 1)), eps=0.0)
        with pytest.raises(ParameterError):
            sinkhorn_w1(np.ones((2, 1)), np.ones((2, 1)), iters=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            sinkhorn_w1(np.ones((2, 2)), np.ones((2, 3)))

    def test_non_finite_cost(self):
        with pytest.raises(EvaluationError):
            sinkhorn_w1(np.array([[np.inf]]), np.ones((2, 1)))


class TestRegularizers:
    def test_balance_skipped_for_single_group(self):
        term = balance_term(Tensor(np.ones((3, 2))), np.array([1, 1, 1]))
        assert term.skipped
        assert term.value.item() == 0.0

    def test_balance_of_separated_groups(self):
        z = Tensor([[0.0], [0.0], [4.0], [4.0]])
        term = balance_term(z, np.array([0, 0, 1, 1]), eps=0.01, iters=200, relative=False)
        assert not term.skipped
        assert term.value.item() == pytest.approx(4.0, abs=1e-3)

    def test_dependence_zero_for_identity_permutation(self):
        rng = np.random.default_rng(0)
        z_c, z_y = Tensor(rng.standard_normal((4, 2))), Tensor(rng.standard_normal((4, 2)))
        assert dependence_term(z_c, z_y, np.arange(4)).value.item() == 0.0

    def test_dependence_positive_when_coupled(self):
        z_c = Tensor(np.array([[0.0], [1.0], [2.0], [3.0]]))
        term = dependence_term(z_c, z_c, np.array([3, 2, 1, 0]), eps=0.01, iters=500, relative=False)
        assert term.value.item() > 0.5

    def test_dependence_skipped_for_one_row(self):
        assert dependence_term(Tensor([[1.0]]), Tensor([[2.0]]), np.array([0])).skipped

    def test_dependence_rejects_non_permutation(self):
        z = Tensor(np.ones((3, 1)))
        with pytest.raises(ContractError):
            dependence_term(z, z, np.array([0, 0, 1]))

    def test_regularizer_gradient_reaches_the_representation(self):
        z = Tensor(np.array([[0.0], [1.0], [3.0], [5.0]]), requires_grad=True)
        with Tape() as tape:
            term = balance_term(z, np.array([0, 1, 0, 1]), eps=0.5, iters=20, relative=False)
            tape.backward(term.value)
        assert np.any(z.grad != 0.0)


class TestExactOracles:
    def test_one_dimensional(self):
        assert exact_w1_1d([0.0, 1.0], [2.0, 3.0]) == 2.0

    def test_assignment_matches_sorting_on_the_line(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(7), rng.standard_normal(7)
        assert exact_w1_assignment(a, b) == pytest.approx(exact_w1_1d(a, b))

    def test_bounded_ipm(self):
        assert bounded_ipm_exact([0.5, 0.5], [1.0, 0.0]) == 1.0
        with pytest.raises(ContractError):
            bounded_ipm_exact([1.0], [0.5, 0.5])
