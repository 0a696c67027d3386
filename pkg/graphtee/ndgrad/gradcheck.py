"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from graphtee.core.exceptions import EvaluationError, ParameterError
from graphtee.core.logging import get_logger, log_structured
from graphtee.ndgrad.params import ModelParams
from graphtee.ndgrad.tensor import Tape, Tensor, no_grad

logger = get_logger(__name__)

DENOMINATOR_FLOOR = 1e-8

ScalarFunction = Callable[[ModelParams], Tensor]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: Tuple[int, ...]
    n_checked: int
    step: float
    tol: float
    per_param: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "worst_param": self.worst_param,
            "worst_index": list(self.worst_index),
            "n_checked": self.n_checked,
            "step": self.step,
            "tol": self.tol,
            "passed": self.passed,
            "per_param": dict(self.per_param),
        }


def _evaluate(f: ScalarFunction, params: ModelParams) -> float:
    with no_grad():
        value = f(params).item()
    if not np.isfinite(value):
        raise EvaluationError("grad_check: function value is not finite")
    return value


def relative_error(analytic: float, numeric: float) -> float:
    denominator = max(abs(analytic), abs(numeric), DENOMINATOR_FLOOR)
    return abs(analytic - numeric) / denominator


def grad_check(
    f: ScalarFunction,
    params: ModelParams,
    step: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare the tape gradient of ``f`` with central differences.

    Every entry of every parameter is perturbed by ``±step``; the relative
    error uses denominators floored at 1e-8.

    Args:
        f: Deterministic scalar function of the parameters
        params: Point at which gradients are compared
        step: Finite-difference step, > 0
        tol: Pass threshold on the maximum relative error

    Returns:
        Report with the worst entry and per-parameter maxima
    """
    if step <= 0:
        raise ParameterError(f"grad_check step must be > 0, got {step}")

    params.zero_grad()
    with Tape() as tape:
        root = f(params)
        if not np.isfinite(root.item()):
            raise EvaluationError("grad_check: function value is not finite")
        tape.backward(root)
    analytic = params.grads()
    base = params.arrays()

    worst = (0.0, "", ())
    per_param: Dict[str, float] = {}
    n_checked = 0
    for name, array in base.items():
        param_worst = 0.0
        for index in np.ndindex(array.shape):
            plus = array.copy()
            minus = array.copy()
            plus[index] += step
            minus[index] -= step
            numeric = (_evaluate(f, params.replace({name: plus})) - _evaluate(f, params.replace({name: minus}))) / (2.0 * step)
            error = relative_error(float(analytic[name][index]), numeric)
            n_checked += 1
            param_worst = max(param_worst, error)
            if error > worst[0]:
                worst = (error, name, tuple(int(i) for i in index))
        per_param[name] = param_worst

    report = GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        n_checked=n_checked,
        step=step,
        tol=tol,
        per_param=per_param,
    )
    log_structured(logger, "info", "gradient check finished", {
        "max_rel_error": report.max_rel_error,
        "worst_param": report.worst_param,
        "n_checked": n_checked,
        "passed": report.passed,
    })
    return report
