"""Gradient checks of the full stage-1 and stage-2 objectives on a toy batch."""

from typing import Dict, List

import numpy as np

from graphtee.core.utils import labelled_rng
from graphtee.ndgrad import GradCheckReport, ModelParams, grad_check
from graphtee.services.datagen import OutcomeGenerator, generate_outcomes, sample_covariates
from graphtee.services.graphs import GraphSample, generate_ba
from graphtee.services.ipm import balance_term, dependence_term
from graphtee.services.networks import (
    GraphBatch,
    init_propensity_params,
    init_tarnet_params,
    oracle_partition,
    propensity_forward,
    propensity_loss,
    supervised_loss,
    tarnet_predict,
)

SINKHORN_EPS = 0.5
SINKHORN_ITERS = 20
TOY_STD_FLOOR = 1e-8
TOY_COVARIATE_SCALE = 0.05


def toy_samples(seed: int, n_graphs: int = 4, n_nodes: int = 6, d: int = 4) -> List[GraphSample]:
    """Small trees with alternating treatments, so both regularizer terms are active.

    Covariates are standardized per column and shrunk to a spread of
    ``TOY_COVARIATE_SCALE``, which keeps elu inputs in their smooth range
    after sum aggregation. Outcomes are standardized jointly over both arms.
    """
    gen0 = OutcomeGenerator.sample(0, d, labelled_rng(seed, "toy:gen", 0))
    gen1 = OutcomeGenerator.sample(1, d, labelled_rng(seed, "toy:gen", 1))
    raw = []
    for index in range(n_graphs):
        rng = labelled_rng(seed, "toy:graph", index)
        topology = generate_ba(n_nodes, 1, rng)
        x = sample_covariates(topology, d, rng)
        y0, y1 = generate_outcomes(topology, x, gen0, gen1, 1.0, rng)
        raw.append((topology, x, y0, y1))

    nodes = np.concatenate([x for _, x, _, _ in raw], axis=0)
    x_mean, x_std = nodes.mean(axis=0), nodes.std(axis=0) + TOY_STD_FLOOR
    outcomes = np.array([y for _, _, y0, y1 in raw for y in (y0, y1)])
    y_mean, y_std = outcomes.mean(), outcomes.std() + TOY_STD_FLOOR
    return [
        GraphSample(
            f"toy{index}",
            topology,
            TOY_COVARIATE_SCALE * (x - x_mean) / x_std,
            index % 2,
            float((y0 - y_mean) / y_std),
            float((y1 - y_mean) / y_std),
            "train",
        )
        for index, (topology, x, y0, y1) in enumerate(raw)
    ]


def check_model_gradients(
    seed: int = 0,
    n_nodes: int = 6,
    d: int = 4,
    width: int = 8,
    lam: float = 1.0,
    step: float = 1e-5,
    tol: float = 1e-4,
) -> Dict[str, GradCheckReport]:
    """Central-difference checks of the propensity loss and the regularized outcome loss."""
    samples = toy_samples(seed, n_nodes=n_nodes, d=d)
    batch = GraphBatch.from_samples(samples)
    partitions = [oracle_partition(sample, 34.0) for sample in samples]
    # a cyclic shift keeps every permuted row away from its own pair
    permutation = np.roll(np.arange(batch.n_graphs), 1)

    def stage1_loss(params: ModelParams):
        return propensity_loss(propensity_forward(batch, params), batch.t)

    def stage2_loss(params: ModelParams):
        out = tarnet_predict(batch, params, batch.t, partitions)
        balance = balance_term(out.z_c, batch.t, SINKHORN_EPS, SINKHORN_ITERS, relative=False)
        dependence = dependence_term(out.z_c, out.z_y, permutation, SINKHORN_EPS, SINKHORN_ITERS, relative=False)
        return supervised_loss(out.y_hat, batch.y) + (balance.value + dependence.value) * lam

    stage1_params = init_propensity_params(d, labelled_rng(seed, "init:propensity"), width)
    stage2_params = init_tarnet_params(d, labelled_rng(seed, "init:gin"), width)
    return {
        "stage1": grad_check(stage1_loss, stage1_params, step, tol),
        "stage2": grad_check(stage2_loss, stage2_params, step, tol),
    }
