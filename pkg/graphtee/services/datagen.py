"""Synthetic covariates, biased treatment assignment and GNN-generated outcomes.

Every random draw comes from a labelled stream (``topology``, ``covariates``,
``treatment``, ``gen_weights``, ``noise``, ``split``) whose sub-seed is
derived from the master seed and recorded in the manifest. Per-graph draws
use substream ``index`` of their stream, so any single graph can be
regenerated on its own.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from graphtee import __version__
from graphtee.core.exceptions import ConsistencyError, IngestionError, ShapeError
from graphtee.core.logging import get_logger, log_structured
from graphtee.core.utils import config_hash, derive_seed, stream_rng
from graphtee.models.config import DatasetConfig
from graphtee.models.manifest import STREAMS, DatasetManifest
from graphtee.services.graphs import GraphSample, Topology, generate_ba, highest_degree_index, ingest_tu, topology_digest

logger = get_logger(__name__)

# Uniform ranges of the generator weights per treatment arm
WEIGHT_RANGES = {0: (-3.0, 3.0), 1: (0.0, 3.0)}


@dataclass(frozen=True)
class OutcomeGenerator:
    """Two rounds of linear self-plus-neighbor-sum message passing for one arm."""

    arm: int
    self_1: np.ndarray
    neighbor_1: np.ndarray
    self_2: np.ndarray
    neighbor_2: np.ndarray

    @property
    def d(self) -> int:
        return int(self.self_1.shape[0])

    @classmethod
    def sample(cls, arm: int, d: int, rng: np.random.Generator) -> "OutcomeGenerator":
        low, high = WEIGHT_RANGES[arm]
        matrices = [rng.uniform(low, high, size=(d, d)) for _ in range(4)]
        return cls(arm, *matrices)


def sample_covariates(topology: Topology, d: int, rng: np.random.Generator) -> np.ndarray:
    """Node covariates with variance equal to the node degree."""
    scale = np.sqrt(topology.degree.astype(np.float64))
    return rng.standard_normal((topology.n_nodes, d)) * scale[:, None]


def treatment_probability(
    topology: Topology,
    x: np.ndarray,
    alpha: float,
    normalize_sum: bool = False,
) -> float:
    """sigmoid(alpha * covariate sum of the highest-degree node)."""
    node = highest_degree_index(topology, x)
    s = float(np.sum(x[node]))
    if normalize_sum:
        s /= x.shape[1]
    return float(expit(alpha * s))


def assign_treatment(
    topology: Topology,
    x: np.ndarray,
    alpha: float,
    rng: np.random.Generator,
    normalize_sum: bool = False,
) -> Tuple[int, float]:
    """Draw the treatment; returns ``(t, p)``."""
    p = treatment_probability(topology, x, alpha, normalize_sum)
    return int(rng.random() < p), p


def _neighbor_sum(topology: Topology, h: np.ndarray) -> np.ndarray:
    src, dst = topology.message_index()
    out = np.zeros_like(h)
    np.add.at(out, dst, h[src])
    return out


def outcome_forward(topology: Topology, x: np.ndarray, generator: OutcomeGenerator) -> np.ndarray:
    """Per-node outputs of the two-layer generator (no bias, no nonlinearity)."""
    d = x.shape[1]
    for matrix in (generator.self_1, generator.neighbor_1, generator.self_2, generator.neighbor_2):
        if matrix.shape != (d, d):
            raise ShapeError("outcome_forward", x.shape, matrix.shape)
    z1 = x @ generator.self_1.T + _neighbor_sum(topology, x) @ generator.neighbor_1.T
    return z1 @ generator.self_2.T + _neighbor_sum(topology, z1) @ generator.neighbor_2.T


def generate_outcomes(
    topology: Topology,
    x: np.ndarray,
    gen0: OutcomeGenerator,
    gen1: OutcomeGenerator,
    c_s: float,
    rng: np.random.Generator,
    noise_variance: float = 0.01,
    shared_noise: bool = False,
) -> Tuple[float, float]:
    """Potential outcomes ``(y0, y1)`` of one graph.

    ``y_w = C_s / (d * |V|) * sum(z_w) + tau_w`` with ``tau_w ~ N(0, noise_variance)``.
    """
    scale = c_s / (x.shape[1] * topology.n_nodes)
    std = float(np.sqrt(noise_variance))
    tau0 = float(rng.normal(0.0, std))
    tau1 = tau0 if shared_noise else float(rng.normal(0.0, std))
    y0 = scale * float(np.sum(outcome_forward(topology, x, gen0))) + tau0
    y1 = scale * float(np.sum(outcome_forward(topology, x, gen1))) + tau1
    return y0, y1


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def split_sizes(n: int, train_fraction: float, val_fraction: float) -> Tuple[int, int, int]:
    n_train = min(n, _round_half_up(train_fraction * n))
    n_val = min(n - n_train, _round_half_up(val_fraction * n))
    return n_train, n_val, n - n_train - n_val


def split_assignment(manifest: DatasetManifest) -> List[str]:
    """Split tag per graph from one permutation of the split stream."""
    n = manifest.n_samples
    n_train, n_val, _ = split_sizes(n, manifest.config.train_fraction, manifest.config.val_fraction)
    order = stream_rng(manifest.sub_seeds["split"]).permutation(n)
    splits = ["test"] * n
    for position, index in enumerate(order):
        if position < n_train:
            splits[index] = "train"
        elif position < n_train + n_val:
            splits[index] = "validation"
    return splits


def build_generators(manifest: DatasetManifest) -> Tuple[OutcomeGenerator, OutcomeGenerator]:
    seed = manifest.sub_seeds["gen_weights"]
    d = manifest.config.d
    return OutcomeGenerator.sample(0, d, stream_rng(seed, 0)), OutcomeGenerator.sample(1, d, stream_rng(seed, 1))


def sample_id(index: int) -> str:
    return f"g{index:05d}"


def generate_sample(
    manifest: DatasetManifest,
    index: int,
    generators: Tuple[OutcomeGenerator, OutcomeGenerator],
    topology: Optional[Topology] = None,
    split: str = "train",
) -> GraphSample:
    """Generate graph ``index`` of a dataset without touching any other graph."""
    config = manifest.config
    seeds = manifest.sub_seeds
    if topology is None:
        topology = generate_ba(config.n_nodes, config.m, stream_rng(seeds["topology"], index))
    x = sample_covariates(topology, config.d, stream_rng(seeds["covariates"], index))
    t, _ = assign_treatment(
        topology, x, config.alpha, stream_rng(seeds["treatment"], index), config.normalize_treatment_sum
    )
    y0, y1 = generate_outcomes(
        topology,
        x,
        generators[0],
        generators[1],
        config.outcome_scale,
        stream_rng(seeds["noise"], index),
        config.noise_variance,
        config.shared_noise,
    )
    return GraphSample(id=sample_id(index), topology=topology, x=x, t=t, y0=y0, y1=y1, split=split)


def load_topologies(config: DatasetConfig) -> Optional[List[Topology]]:
    """Ingested topologies for a TU source, ``None`` for synthetic graphs."""
    if config.source != "tu":
        return None
    if not config.tu_dir:
        raise IngestionError("dataset source is 'tu' but no tu_dir is configured")
    topologies = ingest_tu(config.tu_dir, config.max_nodes, config.tu_name, config.drop_isolated)
    if not topologies:
        raise IngestionError(f"no graphs with at most {config.max_nodes} nodes in {config.tu_dir}")
    return topologies


def manifest_from_config(
    config: DatasetConfig,
    master_seed: int,
    topologies: Optional[Sequence[Topology]] = None,
) -> DatasetManifest:
    sub_seeds = {label: derive_seed(master_seed, label) for label in STREAMS}
    return DatasetManifest(
        master_seed=master_seed,
        sub_seeds=sub_seeds,
        config=config,
        n_samples=len(topologies) if topologies is not None else config.n_graphs,
        tu_digest=topology_digest(topologies) if topologies is not None else None,
        config_hash=config_hash({"dataset": config.model_dump(mode="json"), "seed": master_seed}),
        tool_version=__version__,
    )


def generate_from_manifest(
    manifest: DatasetManifest,
    topologies: Optional[Sequence[Topology]] = None,
) -> List[GraphSample]:
    generators = build_generators(manifest)
    splits = split_assignment(manifest)
    return [
        generate_sample(
            manifest,
            index,
            generators,
            topology=topologies[index] if topologies is not None else None,
            split=splits[index],
        )
        for index in range(manifest.n_samples)
    ]


def build_dataset(config: DatasetConfig, master_seed: int) -> Tuple[List[GraphSample], DatasetManifest]:
    """Generate a complete dataset and the manifest that reproduces it.

    Args:
        config: Generation settings
        master_seed: Seed of every random stream

    Returns:
        Samples in id order and their manifest
    """
    topologies = load_topologies(config)
    manifest = manifest_from_config(config, master_seed, topologies)
    samples = generate_from_manifest(manifest, topologies)
    treated = sum(sample.t for sample in samples)
    log_structured(logger, "info", "dataset generated", {
        "source": config.source,
        "n_samples": len(samples),
        "treated_fraction": round(treated / len(samples), 4),
        "alpha": config.alpha,
        "master_seed": master_seed,
    })
    return samples, manifest


def regenerate(manifest: DatasetManifest) -> List[GraphSample]:
    """Rebuild every sample from the manifest alone."""
    topologies = load_topologies(manifest.config)
    if topologies is not None:
        digest = topology_digest(topologies)
        if digest != manifest.tu_digest or len(topologies) != manifest.n_samples:
            raise ConsistencyError("TU source no longer matches the topologies recorded in the manifest")
    return generate_from_manifest(manifest, topologies)
