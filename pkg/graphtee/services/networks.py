"""Estimator networks: GIN encoder, SAG-pooling propensity model, TARNet heads and DeepSets.

All forward functions operate on a ``GraphBatch``, the disjoint union of a
list of graphs; a single graph is a batch of one. Parameters live in a
``ModelParams`` set under stable dotted names, e.g.
``encoder.layer1.lin1.weight`` or ``head0.lin3.bias``.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from graphtee.core.exceptions import ContractError, ParameterError, ShapeError
from graphtee.ndgrad import ModelParams, Tensor, no_grad
from graphtee.ndgrad import functional as F
from graphtee.services.graphs import GraphSample

PROBABILITY_FLOOR = 1e-7
ENCODERS = ("gin", "deepsets")


@dataclass
class GraphBatch:
    """Disjoint union of graphs with node-to-graph bookkeeping."""

    x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    node_graph: np.ndarray
    offsets: np.ndarray
    sizes: np.ndarray
    t: np.ndarray
    y: np.ndarray

    @classmethod
    def from_samples(cls, samples: Sequence[GraphSample]) -> "GraphBatch":
        if not samples:
            raise ContractError("a batch needs at least one graph")
        sizes = np.array([sample.n_nodes for sample in samples], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        src_parts, dst_parts = [], []
        for sample, offset in zip(samples, offsets):
            src, dst = sample.topology.message_index()
            src_parts.append(src + offset)
            dst_parts.append(dst + offset)
        dims = {sample.x.shape[1] for sample in samples}
        if len(dims) != 1:
            raise ShapeError("batch", *[(d,) for d in sorted(dims)])
        return cls(
            x=np.concatenate([sample.x for sample in samples], axis=0),
            src=np.concatenate(src_parts).astype(np.int64),
            dst=np.concatenate(dst_parts).astype(np.int64),
            node_graph=np.repeat(np.arange(len(samples)), sizes),
            offsets=offsets,
            sizes=sizes,
            t=np.array([sample.t for sample in samples], dtype=np.float64),
            y=np.array([sample.y_obs for sample in samples], dtype=np.float64),
        )

    @property
    def n_graphs(self) -> int:
        return int(self.sizes.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])


@dataclass(frozen=True)
class NodePartition:
    """Confounding nodes V(c) and the remaining nodes V(y) of one graph (local ids)."""

    confounders: np.ndarray
    others: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.confounders.size + self.others.size)


# Parameter construction


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _add_linear(values: Dict[str, np.ndarray], name: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> None:
    values[f"{name}.weight"] = _glorot(rng, fan_in, fan_out)
    values[f"{name}.bias"] = np.zeros(fan_out)


def _add_gin_encoder(values: Dict[str, np.ndarray], d: int, width: int, n_layers: int, rng: np.random.Generator) -> None:
    fan_in = d
    for layer in range(1, n_layers + 1):
        prefix = f"encoder.layer{layer}"
        values[f"{prefix}.eps"] = np.zeros(())
        _add_linear(values, f"{prefix}.lin1", fan_in, width, rng)
        _add_linear(values, f"{prefix}.lin2", width, width, rng)
        fan_in = width


def _add_mlp(values: Dict[str, np.ndarray], prefix: str, width: int, n_layers: int, rng: np.random.Generator) -> None:
    for layer in range(1, n_layers + 1):
        _add_linear(values, f"{prefix}.lin{layer}", width, 1 if layer == n_layers else width, rng)


def init_propensity_params(d: int, rng: np.random.Generator, width: int = 32, n_layers: int = 3) -> ModelParams:
    """Stage-1 parameters: GIN encoder, SAG scoring layer and a 2-layer head."""
    values: Dict[str, np.ndarray] = {}
    _add_gin_encoder(values, d, width, n_layers, rng)
    values["pool.eps"] = np.zeros(())
    _add_linear(values, "pool.score", width, 1, rng)
    _add_mlp(values, "head", width, 2, rng)
    architecture = {"model": "propensity", "encoder": "gin", "d": d, "width": width, "n_layers": n_layers}
    return ModelParams(values, architecture)


def init_tarnet_params(
    d: int,
    rng: np.random.Generator,
    width: int = 32,
    n_layers: int = 3,
    encoder: str = "gin",
) -> ModelParams:
    """Stage-2 parameters: shared encoder plus one head per treatment arm."""
    if encoder not in ENCODERS:
        raise ParameterError(f"unknown encoder {encoder!r}")
    values: Dict[str, np.ndarray] = {}
    if encoder == "gin":
        _add_gin_encoder(values, d, width, n_layers, rng)
    else:
        _add_linear(values, "encoder.phi.lin1", d, width, rng)
        _add_linear(values, "encoder.phi.lin2", width, width, rng)
        _add_linear(values, "encoder.rho.lin1", width, width, rng)
    _add_mlp(values, "head0", width, n_layers, rng)
    _add_mlp(values, "head1", width, n_layers, rng)
    architecture = {"model": "tarnet", "encoder": encoder, "d": d, "width": width, "n_layers": n_layers}
    return ModelParams(values, architecture)


# Building blocks


def linear(x: Tensor, params: ModelParams, name: str) -> Tensor:
    return x @ params[f"{name}.weight"] + params[f"{name}.bias"]


def mlp_head(z: Tensor, params: ModelParams, prefix: str, n_layers: int) -> Tensor:
    """Feedforward head with elu between layers; returns one value per row."""
    h = z
    for layer in range(1, n_layers + 1):
        h = linear(h, params, f"{prefix}.lin{layer}")
        if layer < n_layers:
            h = F.elu(h)
    return h.reshape(h.shape[0])


def _neighbor_sum(h: Tensor, batch: GraphBatch) -> Tensor:
    return F.segment_sum(F.gather(h, batch.src), batch.dst, batch.n_nodes)


def _check_input_dim(batch: GraphBatch, params: ModelParams) -> None:
    expected = params.architecture.get("d")
    if expected is not None and batch.d != expected:
        raise ShapeError("encoder input", (batch.n_nodes, batch.d), (batch.n_nodes, expected))


def gin_encode(batch: GraphBatch, params: ModelParams) -> Tensor:
    """Per-node representations after the GIN layers.

    ``h(l) = MLP_l((1 + eps_l) * h(l-1) + sum of neighbor h(l-1))`` with
    ``h(0) = x``; each undirected edge contributes in both directions.
    """
    _check_input_dim(batch, params)
    h = Tensor(batch.x)
    n_layers = int(params.architecture["n_layers"])
    for layer in range(1, n_layers + 1):
        prefix = f"encoder.layer{layer}"
        combined = h * (params[f"{prefix}.eps"] + 1.0) + _neighbor_sum(h, batch)
        h = linear(F.elu(linear(combined, params, f"{prefix}.lin1")), params, f"{prefix}.lin2")
    return h


def _neighbor_mean(h: Tensor, batch: GraphBatch) -> Tensor:
    degree = np.bincount(batch.dst, minlength=batch.n_nodes).astype(np.float64)
    inverse = np.divide(1.0, degree, out=np.zeros_like(degree), where=degree > 0)
    return F.mul(_neighbor_sum(h, batch), Tensor(np.repeat(inverse[:, None], h.shape[1], axis=1)))


def sag_weights(batch: GraphBatch, params: ModelParams, h: Optional[Tensor] = None) -> Tensor:
    """tanh node scores of the self-attention pooling layer, shape ``(N, 1)``.

    The scoring layer reads layer-normalized node states and the mean of
    their neighbors.
    """
    if h is None:
        h = gin_encode(batch, params)
    normalized = F.row_normalize(h)
    combined = normalized * (params["pool.eps"] + 1.0) + _neighbor_mean(normalized, batch)
    return F.tanh(linear(combined, params, "pool.score"))


def propensity_forward(batch: GraphBatch, params: ModelParams) -> Tensor:
    """Treatment logits, one per graph."""
    h = gin_encode(batch, params)
    weights = sag_weights(batch, params, h)
    spread = weights @ Tensor(np.ones((1, h.shape[1])))
    pooled = F.segment_sum(F.mul(h, spread), batch.node_graph, batch.n_graphs)
    return mlp_head(pooled, params, "head", 2)


def propensity_loss(logits: Tensor, t: np.ndarray) -> Tensor:
    """Summed binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    t = np.asarray(t, dtype=np.float64)
    if logits.shape != t.shape:
        raise ShapeError("propensity_loss", logits.shape, t.shape)
    p = F.clip(F.sigmoid(logits), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    log_likelihood = F.mul(Tensor(t), F.log(p)) + F.mul(Tensor(1.0 - t), F.log(1.0 - p))
    return -F.sum(log_likelihood)


# Confounder selection


def confounder_count(n_nodes: int, k_percent: float) -> int:
    """``max(1, round(k/100 * n))`` with halves rounded up."""
    return max(1, int(np.floor(k_percent / 100.0 * n_nodes + 0.5)))


def _partition_from_order(order: np.ndarray, n_nodes: int, k_percent: float) -> NodePartition:
    count = confounder_count(n_nodes, k_percent)
    return NodePartition(np.sort(order[:count]), np.sort(order[count:]))


def select_top_k(scores: np.ndarray, k_percent: float) -> NodePartition:
    """Highest-scoring nodes become confounders; ties go to the lower index."""
    if not 0 < k_percent <= 100:
        raise ParameterError(f"k_percent must be in (0, 100], got {k_percent}")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.lexsort((np.arange(scores.size), -scores))
    return _partition_from_order(order, scores.size, k_percent)


def select_confounders(samples: Sequence[GraphSample], params: ModelParams, k_percent: float) -> List[NodePartition]:
    """Partition every graph by the SAG weights of a trained propensity model."""
    batch = GraphBatch.from_samples(samples)
    with no_grad():
        weights = sag_weights(batch, params).data.reshape(-1)
    return [
        select_top_k(weights[offset:offset + size], k_percent)
        for offset, size in zip(batch.offsets, batch.sizes)
    ]


def oracle_partition(sample: GraphSample, k_percent: float) -> NodePartition:
    """Rank by degree, then covariate sum, then index; the top node is the true confounder."""
    if not 0 < k_percent <= 100:
        raise ParameterError(f"k_percent must be in (0, 100], got {k_percent}")
    n = sample.n_nodes
    order = np.lexsort((np.arange(n), -sample.x.sum(axis=1), -sample.topology.degree))
    return _partition_from_order(order, n, k_percent)


class LearnedSelector:
    """Frozen stage-1 model used as the confounder selector."""

    kind = "learned"

    def __init__(self, params: ModelParams, k_percent: float, chunk_size: int = 256):
        self.params = params
        self.k_percent = k_percent
        self.chunk_size = chunk_size

    def with_k_percent(self, k_percent: float) -> "LearnedSelector":
        return LearnedSelector(self.params, k_percent, self.chunk_size)

    def partitions(self, samples: Sequence[GraphSample]) -> List[NodePartition]:
        out: List[NodePartition] = []
        for start in range(0, len(samples), self.chunk_size):
            out.extend(select_confounders(samples[start:start + self.chunk_size], self.params, self.k_percent))
        return out


class OracleSelector:
    """Selector that knows the generating confounder (degree ranking)."""

    kind = "oracle"

    def __init__(self, k_percent: float):
        self.k_percent = k_percent

    def with_k_percent(self, k_percent: float) -> "OracleSelector":
        return OracleSelector(k_percent)

    def partitions(self, samples: Sequence[GraphSample]) -> List[NodePartition]:
        return [oracle_partition(sample, self.k_percent) for sample in samples]


# Outcome model


@dataclass
class TarnetOutput:
    y_hat: Tensor
    y0_hat: Tensor
    y1_hat: Tensor
    z: Tensor
    z_c: Optional[Tensor] = None
    z_y: Optional[Tensor] = None


def deepsets_encode(batch: GraphBatch, params: ModelParams) -> Tensor:
    """Edge-blind graph vectors: ``rho(sum_v phi(x_v))``."""
    _check_input_dim(batch, params)
    phi = F.elu(linear(F.elu(linear(Tensor(batch.x), params, "encoder.phi.lin1")), params, "encoder.phi.lin2"))
    pooled = F.segment_sum(phi, batch.node_graph, batch.n_graphs)
    return linear(pooled, params, "encoder.rho.lin1")


def _partition_index(batch: GraphBatch, partitions: Sequence[NodePartition]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if len(partitions) != batch.n_graphs:
        raise ContractError(f"{len(partitions)} partitions for {batch.n_graphs} graphs")
    conf_nodes, conf_graph, other_nodes, other_graph = [], [], [], []
    for graph, (partition, offset, size) in enumerate(zip(partitions, batch.offsets, batch.sizes)):
        merged = np.concatenate([partition.confounders, partition.others])
        if merged.size != size or not np.array_equal(np.sort(merged), np.arange(size)):
            raise ContractError(f"partition of graph {graph} does not cover its {size} nodes exactly")
        conf_nodes.append(partition.confounders + offset)
        conf_graph.append(np.full(partition.confounders.size, graph))
        other_nodes.append(partition.others + offset)
        other_graph.append(np.full(partition.others.size, graph))
    return (
        np.concatenate(conf_nodes).astype(np.int64),
        np.concatenate(conf_graph).astype(np.int64),
        np.concatenate(other_nodes).astype(np.int64),
        np.concatenate(other_graph).astype(np.int64),
    )


def tarnet_predict(
    batch: GraphBatch,
    params: ModelParams,
    t: np.ndarray,
    partitions: Optional[Sequence[NodePartition]] = None,
) -> TarnetOutput:
    """Outcome predictions ``head_t(z)`` and the graph representations.

    With partitions, ``z_c`` and ``z_y`` sum the confounder and remaining
    node representations and ``z = z_c + z_y``; without, ``z`` sums all
    nodes directly.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (batch.n_graphs,):
        raise ShapeError("tarnet_predict", t.shape, (batch.n_graphs,))
    encoder = params.architecture["encoder"]
    z_c = z_y = None
    if encoder == "deepsets":
        if partitions is not None:
            raise ContractError("node partitions need a node-level encoder")
        z = deepsets_encode(batch, params)
    else:
        h = gin_encode(batch, params)
        if partitions is None:
            z = F.segment_sum(h, batch.node_graph, batch.n_graphs)
        else:
            conf_nodes, conf_graph, other_nodes, other_graph = _partition_index(batch, partitions)
            z_c = F.segment_sum(F.gather(h, conf_nodes), conf_graph, batch.n_graphs)
            z_y = F.segment_sum(F.gather(h, other_nodes), other_graph, batch.n_graphs)
            z = z_c + z_y
    n_layers = int(params.architecture["n_layers"])
    y0_hat = mlp_head(z, params, "head0", n_layers)
    y1_hat = mlp_head(z, params, "head1", n_layers)
    y_hat = F.mul(Tensor(t), y1_hat) + F.mul(Tensor(1.0 - t), y0_hat)
    return TarnetOutput(y_hat=y_hat, y0_hat=y0_hat, y1_hat=y1_hat, z=z, z_c=z_c, z_y=z_y)


def supervised_loss(y_hat: Tensor, y_obs: np.ndarray) -> Tensor:
    """Mean squared factual error."""
    y_obs = np.asarray(y_obs, dtype=np.float64)
    if y_hat.shape != y_obs.shape:
        raise ShapeError("supervised_loss", y_hat.shape, y_obs.shape)
    return F.mean(F.square(y_hat - Tensor(y_obs)))


# Predictors


class TarnetPredictor:
    """Inference wrapper around trained TARNet parameters."""

    def __init__(self, params: ModelParams, chunk_size: int = 256):
        self.params = params
        self.chunk_size = chunk_size

    def predict_arms(self, samples: Sequence[GraphSample]) -> Tuple[np.ndarray, np.ndarray]:
        y0_parts, y1_parts = [], []
        with no_grad():
            for start in range(0, len(samples), self.chunk_size):
                batch = GraphBatch.from_samples(samples[start:start + self.chunk_size])
                out = tarnet_predict(batch, self.params, np.zeros(batch.n_graphs))
                y0_parts.append(out.y0_hat.data)
                y1_parts.append(out.y1_hat.data)
        return np.concatenate(y0_parts), np.concatenate(y1_parts)

    def predict(self, samples: Sequence[GraphSample], t: np.ndarray) -> np.ndarray:
        y0, y1 = self.predict_arms(samples)
        t = np.asarray(t, dtype=np.float64)
        return t * y1 + (1.0 - t) * y0

    def cate(self, samples: Sequence[GraphSample]) -> np.ndarray:
        y0, y1 = self.predict_arms(samples)
        return y1 - y0

    def to_params(self) -> ModelParams:
        return self.params


class MeanBaseline:
    """Constant predictor: per-arm training means, or the pooled mean."""

    def __init__(self, mean0: float, mean1: float):
        self.mean0 = float(mean0)
        self.mean1 = float(mean1)

    @classmethod
    def fit(cls, train: Sequence[GraphSample], pooled: bool = False) -> "MeanBaseline":
        if not train:
            raise ContractError("mean baseline needs a non-empty train split")
        y = np.array([sample.y_obs for sample in train])
        t = np.array([sample.t for sample in train])
        overall = float(np.mean(y))
        if pooled:
            return cls(overall, overall)
        mean0 = float(np.mean(y[t == 0])) if np.any(t == 0) else overall
        mean1 = float(np.mean(y[t == 1])) if np.any(t == 1) else overall
        return cls(mean0, mean1)

    def predict_arms(self, samples: Sequence[GraphSample]) -> Tuple[np.ndarray, np.ndarray]:
        n = len(samples)
        return np.full(n, self.mean0), np.full(n, self.mean1)

    def predict(self, samples: Sequence[GraphSample], t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return t * self.mean1 + (1.0 - t) * self.mean0

    def cate(self, samples: Sequence[GraphSample]) -> np.ndarray:
        return np.full(len(samples), self.mean1 - self.mean0)

    def to_params(self) -> ModelParams:
        return ModelParams(
            {"mean.arm0": np.array([self.mean0]), "mean.arm1": np.array([self.mean1])},
            {"model": "mean"},
        )


def predictor_from_params(params: ModelParams):
    """Rebuild a predictor from a checkpointed parameter set."""
    model = params.architecture.get("model")
    if model == "mean":
        return MeanBaseline(params["mean.arm0"].data[0], params["mean.arm1"].data[0])
    if model == "tarnet":
        return TarnetPredictor(params)
    raise ContractError(f"parameter set of kind {model!r} is not an outcome predictor")
