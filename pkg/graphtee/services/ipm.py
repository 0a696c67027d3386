"""Wasserstein IPM terms via differentiable log-domain Sinkhorn, plus exact oracles."""

from dataclasses import dataclass, field
from typing import Any, List, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from graphtee.core.exceptions import ContractError, EvaluationError, ParameterError, ShapeError
from graphtee.ndgrad import Tensor
from graphtee.ndgrad import functional as F


@dataclass
class SinkhornResult:
    """Transport cost with its convergence diagnostics.

    ``violation`` is the max-norm gap between the plan's row sums and the
    uniform source weights after the last iteration; ``history`` holds it
    for every iteration.
    """

    value: Tensor
    violation: float
    eps: float
    history: List[float] = field(default_factory=list)


@dataclass
class RegularizerValue:
    value: Tensor
    skipped: bool = False

    @classmethod
    def skip(cls) -> "RegularizerValue":
        return cls(Tensor(0.0), skipped=True)


def _as_cloud(points: Any, what: str) -> Tensor:
    cloud = points if isinstance(points, Tensor) else Tensor(points)
    if cloud.ndim == 1:
        cloud = cloud.reshape(cloud.shape[0], 1)
    if cloud.ndim != 2:
        raise ShapeError(what, cloud.shape, ("n", "dim"))
    if cloud.shape[0] < 1:
        raise ContractError(f"{what}: point cloud is empty")
    return cloud


def pairwise_cost(a: Tensor, b: Tensor) -> Tensor:
    """Euclidean distances between the rows of ``a`` (n) and ``b`` (m), shape ``(n, m)``."""
    n, m = a.shape[0], b.shape[0]
    rows = np.repeat(np.arange(n), m)
    cols = np.tile(np.arange(m), n)
    diff = F.gather(a, rows) - F.gather(b, cols)
    return F.sqrt(F.sum(F.square(diff), axis=1)).reshape(n, m)


def sinkhorn_w1(
    a: Any,
    b: Any,
    eps: float = 0.1,
    iters: int = 100,
    relative: bool = False,
) -> SinkhornResult:
    """Entropic W1 between two uniformly weighted point clouds.

    Runs ``iters`` log-domain Sinkhorn updates on the Euclidean cost and
    returns ``<plan, cost>``. Every iteration is recorded on the active tape,
    so gradients flow through the unrolled solver.

    Args:
        a: Source cloud, ``(n, dim)`` (or ``(n,)`` for 1-D points)
        b: Target cloud, ``(m, dim)``
        eps: Entropic regularization, > 0
        iters: Number of iterations, >= 1
        relative: Scale ``eps`` by the median of the cost matrix

    Returns:
        SinkhornResult with the differentiable value
    """
    if eps <= 0:
        raise ParameterError(f"sinkhorn eps must be > 0, got {eps}")
    if iters < 1:
        raise ParameterError(f"sinkhorn iters must be >= 1, got {iters}")
    a = _as_cloud(a, "sinkhorn source")
    b = _as_cloud(b, "sinkhorn target")
    if a.shape[1] != b.shape[1]:
        raise ShapeError("sinkhorn_w1", a.shape, b.shape)

    cost = pairwise_cost(a, b)
    if not np.all(np.isfinite(cost.data)):
        raise EvaluationError("sinkhorn_w1: cost matrix has non-finite entries")
    n, m = cost.shape

    eps_abs = float(eps)
    if relative:
        median = float(np.median(cost.data))
        if median > 0:
            eps_abs = eps * median

    # A plan with a single row or column is forced: the product of the marginals
    if n == 1 or m == 1:
        return SinkhornResult(value=F.mean(cost), violation=0.0, eps=eps_abs, history=[0.0])

    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    cost_t = F.transpose(cost)
    g = Tensor(np.zeros(m))
    history: List[float] = []
    f: Optional[Tensor] = None
    for _ in range(iters):
        f = F.logsumexp((g - cost) * (1.0 / eps_abs) + log_b, axis=1) * -eps_abs
        g = F.logsumexp((f - cost_t) * (1.0 / eps_abs) + log_a, axis=1) * -eps_abs
        log_plan = (f.data[:, None] + g.data[None, :] - cost.data) / eps_abs + log_a[:, None] + log_b[None, :]
        row_sums = np.exp(logsumexp(log_plan, axis=1))
        history.append(float(np.max(np.abs(row_sums - np.exp(log_a)))))

    shifted = F.transpose(F.transpose(g - cost) + f)
    plan = F.exp(shifted * (1.0 / eps_abs) + np.add.outer(log_a, log_b))
    value = F.sum(F.mul(plan, cost))
    return SinkhornResult(value=value, violation=history[-1], eps=eps_abs, history=history)


def draw_permutation(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.permutation(n)


def balance_term(
    z: Tensor,
    t: np.ndarray,
    eps: float = 0.1,
    iters: int = 100,
    relative: bool = True,
) -> RegularizerValue:
    """Sinkhorn distance between the control and treated rows of ``z``.

    Skipped (flagged zero) when the batch holds a single treatment group.
    """
    t = np.asarray(t)
    if t.shape != (z.shape[0],):
        raise ShapeError("balance_term", z.shape, t.shape)
    control = np.flatnonzero(t == 0)
    treated = np.flatnonzero(t == 1)
    if control.size == 0 or treated.size == 0:
        return RegularizerValue.skip()
    result = sinkhorn_w1(F.gather(z, control), F.gather(z, treated), eps, iters, relative)
    return RegularizerValue(result.value)


def dependence_term(
    z_c: Tensor,
    z_y: Tensor,
    permutation: np.ndarray,
    eps: float = 0.1,
    iters: int = 100,
    relative: bool = True,
) -> RegularizerValue:
    """Sinkhorn distance between ``[z_c | z_y]`` and ``[z_c | z_y permuted]``.

    Permuting ``z_y`` across the batch yields samples of the product of the
    two marginals. Skipped for a batch of one.
    """
    if z_c.shape != z_y.shape:
        raise ShapeError("dependence_term", z_c.shape, z_y.shape)
    n = z_c.shape[0]
    if n < 2:
        return RegularizerValue.skip()
    permutation = np.asarray(permutation, dtype=np.int64)
    if permutation.shape != (n,) or not np.array_equal(np.sort(permutation), np.arange(n)):
        raise ContractError(f"dependence_term needs a permutation of {n} rows")
    if np.array_equal(permutation, np.arange(n)):
        return RegularizerValue(Tensor(0.0))
    joint = F.concat([z_c, z_y])
    product = F.concat([z_c, F.gather(z_y, permutation)])
    return RegularizerValue(sinkhorn_w1(joint, product, eps, iters, relative).value)


def exact_w1_1d(a: Any, b: Any) -> float:
    """Exact W1 between equal-count 1-D clouds: mean gap of the sorted values."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size != b.size:
        raise ContractError(f"exact_w1_1d needs equal counts, got {a.size} and {b.size}")
    if a.size == 0:
        raise ContractError("exact_w1_1d needs non-empty clouds")
    return float(np.mean(np.abs(a - b)))


def exact_w1_assignment(a: Any, b: Any) -> float:
    """Exact W1 between equal-count clouds by optimal assignment."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    if a.shape != b.shape:
        raise ContractError(f"exact_w1_assignment needs equal shapes, got {a.shape} and {b.shape}")
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def bounded_ipm_exact(p: Any, q: Any) -> float:
    """IPM over functions bounded by 1 on a shared finite support: ``sum |p - q|``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractError(f"distributions live on different supports: {p.shape} vs {q.shape}")
    return float(np.sum(np.abs(p - q)))
