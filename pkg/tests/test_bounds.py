import numpy as np
import pytest

from graphtee.core.exceptions import ContractError, PreconditionError
from graphtee.services.bounds import (
    check_decomposition_bound,
    check_dependence_lemma,
    check_marginal_lemma,
    dependence_gap,
    random_joint,
    verify_bounds,
)


class TestMarginalLemma:
    def test_independent_treatment_has_zero_gap(self):
        joint = np.outer([0.2, 0.3, 0.5], [0.4, 0.6])
        check = check_marginal_lemma(joint)
        assert check.lhs == pytest.approx(0.0, abs=1e-12)
        assert check.rhs == pytest.approx(0.0, abs=1e-12)
        assert not check.violated

    def test_sharper_bound_is_attained(self):
        joint = random_joint(np.random.default_rng(0), (4, 2))
        check = check_marginal_lemma(joint)
        assert check.lhs == pytest.approx(check.extra["sharper_rhs"], rel=1e-12)
        assert check.slack >= 0.0

    def test_degenerate_treatment(self):
        joint = np.array([[0.5, 0.0], [0.5, 0.0]])
        with pytest.raises(PreconditionError):
            check_marginal_lemma(joint)

    def test_rejects_unnormalized_table(self):
        with pytest.raises(ContractError):
            check_marginal_lemma(np.array([[0.5, 0.5], [0.5, 0.5]]))


class TestDependenceLemma:
    def test_independent_representations(self):
        t_given_c = np.array([[0.3, 0.8], [0.7, 0.2]])
        p_c, p_y = np.array([0.4, 0.6]), np.array([0.1, 0.5, 0.4])
        joint = t_given_c[:, :, None] * p_c[None, :, None] * p_y[None, None, :]
        check = check_dependence_lemma(joint)
        assert check.extra["delta"] == pytest.approx(0.0, abs=1e-12)
        assert check.lhs == pytest.approx(check.extra["decoupled"], abs=1e-12)
        assert not check.violated

    def test_treatment_independent_of_confounder(self):
        joint = np.einsum("t,cy->tcy", np.array([0.5, 0.5]), np.array([[0.4, 0.1], [0.1, 0.4]]))
        check = check_dependence_lemma(joint)
        delta = dependence_gap(joint)
        assert check.extra["decoupled"] == pytest.approx(0.0, abs=1e-12)
        assert check.lhs == pytest.approx(delta)
        assert check.slack == pytest.approx(delta)

    def test_zero_probability_confounder_atom(self):
        joint = np.zeros((2, 2, 2))
        joint[:, 0, :] = 0.25
        with pytest.raises(PreconditionError):
            check_dependence_lemma(joint)


class TestDecompositionBound:
    def test_lhs_equals_confounder_gap(self):
        joint = random_joint(np.random.default_rng(2), (2, 3, 4))
        check = check_decomposition_bound(joint)
        delta = check.extra["delta"]
        assert check.slack == pytest.approx(3.0 * delta, rel=1e-9, abs=1e-12)


class TestVerifyBounds:
    def test_no_violations(self):
        report = verify_bounds(50, seed=0)
        assert report.n_violations == 0
        assert len(report.checks) == 150
        assert set(report.min_slack) == {"marginal", "dependence", "decomposition"}
        assert all(value >= -1e-9 for value in report.min_slack.values())

    def test_reproducible(self):
        a, b = verify_bounds(10, seed=3), verify_bounds(10, seed=3)
        assert [c.lhs for c in a.checks] == [c.lhs for c in b.checks]
        assert a.config_hash == b.config_hash

    def test_instance_seeds_are_recorded(self):
        report = verify_bounds(5, seed=7)
        assert len({check.instance_seed for check in report.checks}) == 5

    def test_rejects_zero_trials(self):
        with pytest.raises(ContractError):
            verify_bounds(0, seed=0)
