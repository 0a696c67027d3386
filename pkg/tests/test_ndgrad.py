import numpy as np
import pytest

from graphtee.core.exceptions import ContractError, EvaluationError, IndexRangeError, ParameterError, ShapeError
from graphtee.ndgrad import ModelParams, Tape, Tensor, grad_check, no_grad
from graphtee.ndgrad import functional as F


def _leaf(values, name="w"):
    return Tensor(values, requires_grad=True, name=name)


class TestForwardOps:
    def test_elu_values(self):
        out = F.elu(Tensor([0.0, -1.0, 2.0])).data
        assert out[0] == 0.0
        assert out[1] == pytest.approx(np.exp(-1.0) - 1.0, abs=1e-15)
        assert out[2] == 2.0

    def test_sigmoid_at_zero(self):
        assert F.sigmoid(Tensor(0.0)).item() == 0.5

    def test_segment_sum_example(self):
        rows = Tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        out = F.segment_sum(rows, [0, 0, 1], 2)
        np.testing.assert_array_equal(out.data, [[4.0, 6.0], [5.0, 6.0]])

    def test_row_normalize_values(self):
        out = F.row_normalize(Tensor([[2.0, 4.0, 6.0, 8.0], [1.0, 1.0, 1.0, 1.0]])).data
        np.testing.assert_allclose(out[0], np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(5.0 + 1e-5))
        np.testing.assert_array_equal(out[1], np.zeros(4))

    def test_row_normalize_needs_a_matrix(self):
        with pytest.raises(ShapeError):
            F.row_normalize(Tensor([1.0, 2.0]))

    def test_segment_index_out_of_range(self):
        with pytest.raises(IndexRangeError):
            F.segment_sum(Tensor([[1.0], [2.0]]), [0, 2], 2)

    def test_gather_index_out_of_range(self):
        with pytest.raises(IndexRangeError):
            F.gather(Tensor([[1.0], [2.0]]), [3])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError) as info:
            F.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
        assert "(2, 3)" in str(info.value) and "(3, 2)" in str(info.value)

    def test_leading_dim_broadcast_only(self):
        out = F.add(Tensor(np.ones((4, 3))), Tensor([1.0, 2.0, 3.0]))
        assert out.shape == (4, 3)
        with pytest.raises(ShapeError):
            F.mul(Tensor(np.ones((4, 3))), Tensor(np.ones((4, 1))))

    def test_matmul_inner_dims(self):
        with pytest.raises(ShapeError):
            F.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_concat_last_axis(self):
        out = F.concat([Tensor(np.ones((2, 1))), Tensor(np.zeros((2, 2)))])
        np.testing.assert_array_equal(out.data, [[1, 0, 0], [1, 0, 0]])

    def test_data_is_read_only(self):
        tensor = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            tensor.data[0] = 5.0

    def test_nothing_recorded_without_tape(self):
        w = _leaf([1.0, 2.0])
        out = F.square(w)
        assert not out.requires_grad


class TestBackward:
    def test_sum_of_squares(self):
        w = _leaf([1.0, 2.0])
        with Tape() as tape:
            root = F.sum(w * w)
            tape.backward(root)
        np.testing.assert_array_equal(w.grad, [2.0, 4.0])
        assert len(tape) == 0

    def test_sigmoid_gradient(self):
        x = _leaf(0.0, "x")
        with Tape() as tape:
            tape.backward(F.sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_non_scalar_root_rejected(self):
        w = _leaf([1.0, 2.0])
        with Tape() as tape:
            out = F.square(w)
            with pytest.raises(ContractError):
                tape.backward(out)

    def test_non_participating_leaf_has_zero_grad(self):
        used, unused = _leaf([1.0]), _leaf([3.0], "u")
        with Tape() as tape:
            tape.backward(F.sum(F.exp(used)))
        np.testing.assert_array_equal(unused.grad, [0.0])

    def test_linearity(self):
        rng = np.random.default_rng(3)
        w = _leaf(rng.normal(size=(3, 2)))
        x = Tensor(rng.normal(size=(4, 3)))

        def f():
            return F.sum(F.tanh(x @ w))

        def g():
            return F.sum(F.square(x @ w))

        grads = []
        for build in (f, g):
            w.zero_grad()
            with Tape() as tape:
                tape.backward(build())
            grads.append(w.grad.copy())
        w.zero_grad()
        with Tape() as tape:
            tape.backward(f() * 2.0 + g() * -0.5)
        np.testing.assert_allclose(w.grad, 2.0 * grads[0] - 0.5 * grads[1], atol=1e-12)

    def test_gradients_are_deterministic(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=(5, 3))
        results = []
        for _ in range(2):
            w = _leaf(values)
            with Tape() as tape:
                tape.backward(F.sum(F.elu(F.segment_sum(w, [0, 1, 1, 0, 2], 3))))
            results.append(w.grad.copy())
        assert np.array_equal(results[0], results[1])

    def test_no_grad_suspends_recording(self):
        w = _leaf([1.0])
        with Tape() as tape:
            with no_grad():
                F.square(w)
            assert len(tape) == 0


class TestGradCheck:
    def test_linear_least_squares(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(3, 1)))
        y = Tensor(rng.normal(size=(2, 1)))
        params = ModelParams({"w": rng.normal(size=(2, 3))})

        def loss(p):
            return F.sum(F.square(p["w"] @ x - y)) * 0.5

        report = grad_check(loss, params)
        assert report.passed
        assert report.n_checked == 6

    def test_constant_function(self):
        params = ModelParams({"w": np.ones((2, 2))})
        report = grad_check(lambda p: Tensor(3.0), params)
        assert report.max_rel_error == 0.0
        assert report.passed

    def test_segment_sum_adjoint(self):
        rng = np.random.default_rng(5)
        params = ModelParams({"rows": rng.normal(size=(6, 2))})
        weights = Tensor(rng.normal(size=(3, 2)))

        def loss(p):
            return F.sum(F.segment_sum(p["rows"], [2, 0, 1, 1, 0, 2], 3) * weights)

        assert grad_check(loss, params).passed

    def test_supporting_ops(self):
        rng = np.random.default_rng(9)
        params = ModelParams({"a": rng.uniform(0.5, 2.0, size=(3, 4))})

        def loss(p):
            a = p["a"]
            return F.sum(F.logsumexp(F.log(a), axis=1)) + F.mean(F.sqrt(F.transpose(a))) + F.sum(F.sigmoid(a.reshape(12)))

        assert grad_check(loss, params).passed

    def test_row_normalize(self):
        rng = np.random.default_rng(11)
        params = ModelParams({"a": rng.normal(size=(5, 4))})
        weights = Tensor(rng.normal(size=(5, 4)))

        def loss(p):
            return F.sum(F.square(F.row_normalize(p["a"]) - weights))

        assert grad_check(loss, params).passed

    def test_non_finite_function(self):
        params = ModelParams({"w": np.array([-1.0])})
        with pytest.raises(EvaluationError):
            grad_check(lambda p: F.sum(F.log(p["w"])), params)

    def test_step_must_be_positive(self):
        params = ModelParams({"w": np.ones(2)})
        with pytest.raises(ParameterError):
            grad_check(lambda p: F.sum(p["w"]), params, step=0.0)


class TestModelParams:
    def test_replace_returns_new_set(self):
        params = ModelParams({"a": np.zeros(2), "b": np.ones(3)}, {"kind": "toy"})
        updated = params.replace({"a": np.array([1.0, 2.0])})
        np.testing.assert_array_equal(params["a"].data, [0.0, 0.0])
        np.testing.assert_array_equal(updated["a"].data, [1.0, 2.0])
        assert updated.architecture == {"kind": "toy"}
        assert list(updated) == ["a", "b"]

    def test_replace_rejects_wrong_shape(self):
        params = ModelParams({"a": np.zeros(2)})
        with pytest.raises(ContractError):
            params.replace({"a": np.zeros(3)})

    def test_membership_of_unknown_names(self):
        params = ModelParams({"encoder.layer1.lin1.weight": np.zeros((2, 2))})
        assert "encoder.layer1.lin1.weight" in params
        assert "encoder.phi.lin1.weight" not in params
        assert params.get("encoder.phi.lin1.weight") is None

    def test_unknown_name_lookup_is_a_contract_error(self):
        params = ModelParams({"a": np.zeros(2)})
        with pytest.raises(ContractError):
            params["b"]
