"""Exact checks of the balancing inequalities on finite discrete joints.

All quantities use the IPM over functions bounded by 1, which on a finite
support is the total absolute difference of the two tables.
"""

from typing import Tuple

import numpy as np

from graphtee import __version__
from graphtee.core.exceptions import ContractError, PreconditionError
from graphtee.core.logging import get_logger, log_structured
from graphtee.core.utils import config_hash, derive_seed
from graphtee.models.report import BoundsReport, LemmaCheck
from graphtee.services.ipm import bounded_ipm_exact

logger = get_logger(__name__)

SLACK_TOLERANCE = 1e-9
MASS_TOLERANCE = 1e-12


def validate_joint(table: np.ndarray, ndim: int) -> np.ndarray:
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != ndim:
        raise ContractError(f"expected a {ndim}-way probability table, got shape {table.shape}")
    if np.any(table < 0):
        raise ContractError("probabilities must be non-negative")
    if abs(table.sum() - 1.0) > MASS_TOLERANCE:
        raise ContractError(f"probabilities sum to {table.sum()!r}, not 1")
    return table


def _check(lemma: str, lhs: float, rhs: float, instance_seed: int, **extra: float) -> LemmaCheck:
    slack = rhs - lhs
    return LemmaCheck(
        lemma=lemma,
        instance_seed=instance_seed,
        lhs=lhs,
        rhs=rhs,
        slack=slack,
        violated=bool(slack < -SLACK_TOLERANCE),
        extra=extra,
    )


def check_marginal_lemma(joint: np.ndarray, instance_seed: int = -1) -> LemmaCheck:
    """IPM(p(x,t), p(x)p(t)) <= 1/2 IPM(p(x|t=0), p(x|t=1)).

    Args:
        joint: Table of shape ``(|X|, 2)`` over (x, t)
        instance_seed: Seed that produced the table, for the report

    Returns:
        LemmaCheck whose ``extra`` carries the sharper bound
        ``2 p(t=0) p(t=1) IPM(p(x|t=0), p(x|t=1))``
    """
    joint = validate_joint(joint, 2)
    if joint.shape[1] != 2:
        raise ContractError(f"treatment axis must have size 2, got {joint.shape[1]}")
    p_t = joint.sum(axis=0)
    p_x = joint.sum(axis=1)
    if np.any(p_t <= 0) or np.any(p_t >= 1):
        raise PreconditionError(f"p(t) = {p_t.tolist()} leaves a conditional undefined")
    lhs = bounded_ipm_exact(joint, np.outer(p_x, p_t))
    conditional_gap = bounded_ipm_exact(joint[:, 0] / p_t[0], joint[:, 1] / p_t[1])
    sharper = 2.0 * p_t[0] * p_t[1] * conditional_gap
    return _check("marginal", lhs, 0.5 * conditional_gap, instance_seed, sharper_rhs=float(sharper))


def _dependence_tables(joint: np.ndarray) -> Tuple[np.ndarray, ...]:
    p_t = joint.sum(axis=(1, 2))
    p_c = joint.sum(axis=(0, 2))
    p_y = joint.sum(axis=(0, 1))
    p_cy = joint.sum(axis=0)
    if np.any(p_c <= 0):
        raise PreconditionError("a z_c atom has zero probability, p(t|z_c) is undefined")
    t_given_c = joint.sum(axis=2) / p_c[None, :]
    return p_t, p_c, p_y, p_cy, t_given_c


def dependence_gap(joint: np.ndarray) -> float:
    """Delta = IPM(p(z_c, z_y), p(z_c) p(z_y))."""
    joint = validate_joint(joint, 3)
    p_cy = joint.sum(axis=0)
    return bounded_ipm_exact(p_cy, np.outer(p_cy.sum(axis=1), p_cy.sum(axis=0)))


def check_dependence_lemma(joint: np.ndarray, instance_seed: int = -1) -> LemmaCheck:
    """IPM(p(t|z_c)p(z_c,z_y), p(t)p(z_c)p(z_y))
    <= IPM(p(t|z_c)p(z_c)p(z_y), p(t)p(z_c)p(z_y)) + 2 Delta.

    ``joint`` is a ``(|T|, |Z_c|, |Z_y|)`` table.
    """
    joint = validate_joint(joint, 3)
    p_t, p_c, p_y, p_cy, t_given_c = _dependence_tables(joint)
    product = p_t[:, None, None] * p_c[None, :, None] * p_y[None, None, :]
    lhs = bounded_ipm_exact(t_given_c[:, :, None] * p_cy[None, :, :], product)
    decoupled = bounded_ipm_exact(t_given_c[:, :, None] * p_c[None, :, None] * p_y[None, None, :], product)
    delta = dependence_gap(joint)
    return _check("dependence", lhs, decoupled + 2.0 * delta, instance_seed, delta=delta, decoupled=decoupled)


def check_decomposition_bound(joint: np.ndarray, instance_seed: int = -1) -> LemmaCheck:
    """IPM(p(t|z_c)p(z_c,z_y), p(t)p(z_c,z_y)) <= IPM(p(t,z_c), p(t)p(z_c)) + 3 Delta."""
    joint = validate_joint(joint, 3)
    p_t, p_c, _, p_cy, t_given_c = _dependence_tables(joint)
    lhs = bounded_ipm_exact(t_given_c[:, :, None] * p_cy[None, :, :], p_t[:, None, None] * p_cy[None, :, :])
    confounder_gap = bounded_ipm_exact(joint.sum(axis=2), np.outer(p_t, p_c))
    delta = dependence_gap(joint)
    return _check("decomposition", lhs, confounder_gap + 3.0 * delta, instance_seed, delta=delta)


def random_joint(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Probability table drawn uniformly from the simplex."""
    size = int(np.prod(shape))
    table = rng.dirichlet(np.ones(size)).reshape(shape)
    # renormalize so the mass check holds to the last bit
    return table / table.sum()


def verify_bounds(trials: int, seed: int, max_support: int = 4) -> BoundsReport:
    """Run every inequality check on ``trials`` random joints.

    Each trial draws its supports (2..max_support per variable, treatment
    binary) and tables from its own instance seed, recorded in the report.
    """
    if trials < 1:
        raise ContractError(f"trials must be >= 1, got {trials}")
    checks = []
    for trial in range(trials):
        instance_seed = derive_seed(seed, f"bounds:{trial}")
        rng = np.random.default_rng(instance_seed)
        n_x, n_c, n_y = (int(v) for v in rng.integers(2, max_support + 1, size=3))
        checks.append(check_marginal_lemma(random_joint(rng, (n_x, 2)), instance_seed))
        joint = random_joint(rng, (2, n_c, n_y))
        checks.append(check_dependence_lemma(joint, instance_seed))
        checks.append(check_decomposition_bound(joint, instance_seed))

    min_slack = {}
    for check in checks:
        min_slack[check.lemma] = min(min_slack.get(check.lemma, np.inf), check.slack)
    report = BoundsReport(
        config_hash=config_hash({"trials": trials, "seed": seed, "max_support": max_support}),
        tool_version=__version__,
        seed=seed,
        trials=trials,
        n_violations=sum(check.violated for check in checks),
        min_slack={lemma: float(value) for lemma, value in min_slack.items()},
        checks=checks,
    )
    log_structured(logger, "info", "bound verification finished", {
        "trials": trials,
        "n_checks": len(checks),
        "n_violations": report.n_violations,
        **{f"min_slack_{lemma}": value for lemma, value in report.min_slack.items()},
    })
    return report
