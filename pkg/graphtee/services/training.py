"""Two-stage training: propensity selector, regularized TARNet, lambda selection and baselines."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import roc_auc_score

from graphtee.core.exceptions import ContractError, ParameterError, TrainingError
from graphtee.core.logging import get_logger, log_structured
from graphtee.core.utils import labelled_rng
from graphtee.models.config import TrainConfig
from graphtee.ndgrad import ModelParams, Tape, no_grad
from graphtee.services.graphs import GraphSample
from graphtee.services.ipm import balance_term, dependence_term, draw_permutation
from graphtee.services.networks import (
    GraphBatch,
    LearnedSelector,
    MeanBaseline,
    NodePartition,
    OracleSelector,
    TarnetPredictor,
    init_propensity_params,
    init_tarnet_params,
    propensity_forward,
    propensity_loss,
    supervised_loss,
    tarnet_predict,
)

logger = get_logger(__name__)

REGULARIZERS = (None, "cfr", "graphtee")
EVAL_CHUNK = 256


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={name: np.zeros(tensor.shape) for name, tensor in params.items()},
            v={name: np.zeros(tensor.shape) for name, tensor in params.items()},
        )


def adam_step(
    params: ModelParams,
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns new parameters and state.

    Raises:
        TrainingError: If any gradient holds NaN or infinity (nothing is updated)
    """
    bad = [name for name, grad in grads.items() if not np.all(np.isfinite(grad))]
    if bad:
        raise TrainingError(
            f"non-finite gradients in {', '.join(bad)}; step {state.step + 1} aborted",
            {"params": bad, "step": state.step + 1},
        )
    beta1, beta2 = betas
    step = state.step + 1
    m, v, updates = {}, {}, {}
    for name, tensor in params.items():
        grad = grads[name]
        if grad.shape != tensor.shape:
            raise ContractError(f"gradient of {name} has shape {grad.shape}, parameter {tensor.shape}")
        m[name] = beta1 * state.m[name] + (1.0 - beta1) * grad
        v[name] = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        m_hat = m[name] / (1.0 - beta1 ** step)
        v_hat = v[name] / (1.0 - beta2 ** step)
        updates[name] = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params.replace(updates), AdamState(m=m, v=v, step=step)


@dataclass
class TrainLog:
    """Per-epoch training records ``{stage, epoch, train_loss, val_loss, reg_value}``."""

    records: List[Dict[str, Any]] = field(default_factory=list)

    def add(
        self,
        stage: str,
        epoch: int,
        train_loss: float,
        val_loss: float,
        reg_value: Optional[float] = None,
        **extra: Any,
    ) -> None:
        self.records.append({
            "stage": stage,
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "reg_value": reg_value,
            **extra,
        })

    def extend(self, other: "TrainLog") -> None:
        self.records.extend(other.records)

    def stage(self, name: str) -> List[Dict[str, Any]]:
        return [record for record in self.records if record["stage"] == name]


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    return [order[start:start + batch_size] for start in range(0, n, batch_size)]


def _require(samples: Sequence[GraphSample], what: str) -> None:
    if not samples:
        raise TrainingError(f"{what} split is empty")


def _chunks(samples: Sequence[GraphSample]) -> List[GraphBatch]:
    return [GraphBatch.from_samples(samples[i:i + EVAL_CHUNK]) for i in range(0, len(samples), EVAL_CHUNK)]


# Stage 1


@dataclass
class Stage1Result:
    params: ModelParams
    log: TrainLog
    best_val_loss: float
    val_accuracy: float
    val_auc: Optional[float]


def propensity_scores(params: ModelParams, batches: Sequence[GraphBatch]) -> np.ndarray:
    with no_grad():
        return np.concatenate([propensity_forward(batch, params).data for batch in batches])


def _mean_propensity_loss(params: ModelParams, batches: Sequence[GraphBatch]) -> float:
    with no_grad():
        total = sum(propensity_loss(propensity_forward(batch, params), batch.t).item() for batch in batches)
    return total / sum(batch.n_graphs for batch in batches)


def propensity_metrics(params: ModelParams, batches: Sequence[GraphBatch], t: np.ndarray) -> Tuple[float, Optional[float]]:
    """Accuracy and AUC of the propensity logits; AUC is None for a single-class ``t``."""
    logits = propensity_scores(params, batches)
    accuracy = float(np.mean((logits > 0).astype(int) == t))
    auc = float(roc_auc_score(t, logits)) if len(set(t.tolist())) == 2 else None
    return accuracy, auc


def train_stage1(
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
) -> Stage1Result:
    """Fit the propensity model with the SAG-pooling readout.

    Returns the snapshot with the lowest mean validation cross-entropy.
    """
    _require(train, "train")
    _require(val, "validation")
    treated = {sample.t for sample in train}
    if len(treated) < 2:
        raise TrainingError(
            f"train split only holds treatment {treated.pop()}; propensity model cannot be fit",
            {"stage": "stage1"},
        )
    d = train[0].x.shape[1]
    params = init_propensity_params(d, labelled_rng(seed, "init:propensity"), cfg.width, cfg.n_layers)
    state = AdamState.zeros(params)
    val_batches = _chunks(val)
    val_t = np.array([sample.t for sample in val])
    log = TrainLog()

    best_params, best_loss = params, np.inf
    for epoch in range(1, cfg.epochs_stage1 + 1):
        total = 0.0
        for index in iterate_batches(len(train), cfg.batch_size, labelled_rng(seed, "batches:stage1", epoch)):
            batch = GraphBatch.from_samples([train[i] for i in index])
            with Tape() as tape:
                loss = propensity_loss(propensity_forward(batch, params), batch.t)
                total += loss.item()
                tape.backward(loss)
            params, state = adam_step(params, params.grads(), state, cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.adam_eps)
        val_loss = _mean_propensity_loss(params, val_batches)
        accuracy, auc = propensity_metrics(params, val_batches, val_t)
        log.add("stage1", epoch, total / len(train), val_loss, val_accuracy=accuracy, val_auc=auc)
        if val_loss < best_loss:
            best_params, best_loss = params, val_loss
        log_structured(logger, "info", "stage1 epoch", {
            "epoch": epoch,
            "train_loss": round(total / len(train), 6),
            "val_loss": round(val_loss, 6),
            "val_accuracy": round(accuracy, 4),
            "val_auc": None if auc is None else round(auc, 4),
        })

    accuracy, auc = propensity_metrics(best_params, val_batches, val_t)
    log_structured(logger, "info", "stage1 finished", {
        "epochs": cfg.epochs_stage1,
        "best_val_loss": round(float(best_loss), 6),
        "val_accuracy": round(accuracy, 4),
        "val_auc": None if auc is None else round(auc, 4),
    })
    return Stage1Result(best_params, log, float(best_loss), accuracy, auc)


# Stage 2 and the TARNet baselines


@dataclass
class TarnetFit:
    """A trained outcome model.

    ``skipped_batches`` counts regularized batches on which every penalty
    term was skipped; the per-term counts are kept alongside.
    """

    params: ModelParams
    log: TrainLog
    best_val_loss: float
    lam: float
    n_batches: int = 0
    skipped_batches: int = 0
    skipped_balance: int = 0
    skipped_dependence: int = 0


def factual_loss(params: ModelParams, samples: Sequence[GraphSample]) -> float:
    """Mean squared error of the factual predictions."""
    predictor = TarnetPredictor(params, EVAL_CHUNK)
    t = np.array([sample.t for sample in samples], dtype=np.float64)
    y = np.array([sample.y_obs for sample in samples])
    return float(np.mean((predictor.predict(samples, t) - y) ** 2))


def _train_tarnet(
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
    encoder: str,
    lam: float = 0.0,
    regularizer: Optional[str] = None,
    partitions: Optional[Sequence[NodePartition]] = None,
) -> TarnetFit:
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if regularizer not in REGULARIZERS:
        raise ParameterError(f"unknown regularizer {regularizer!r}")
    if regularizer == "graphtee" and partitions is None:
        raise ContractError("the graph regularizer needs node partitions of the train split")
    _require(train, "train")
    _require(val, "validation")

    regularized = regularizer is not None and lam > 0
    d = train[0].x.shape[1]
    params = init_tarnet_params(d, labelled_rng(seed, f"init:{encoder}"), cfg.width, cfg.n_layers, encoder)
    state = AdamState.zeros(params)
    log = TrainLog()
    sinkhorn = {"eps": cfg.sinkhorn_eps, "iters": cfg.sinkhorn_iters, "relative": cfg.sinkhorn_relative}

    best_params, best_loss = params, np.inf
    n_batches = skipped = skipped_balance = skipped_dependence = 0
    for epoch in range(1, cfg.epochs_stage2 + 1):
        total, reg_total, reg_count = 0.0, 0.0, 0
        batches = iterate_batches(len(train), cfg.batch_size, labelled_rng(seed, "batches:stage2", epoch))
        for batch_number, index in enumerate(batches):
            samples = [train[i] for i in index]
            batch = GraphBatch.from_samples(samples)
            use_partitions = [partitions[i] for i in index] if regularized and regularizer == "graphtee" else None
            with Tape() as tape:
                out = tarnet_predict(batch, params, batch.t, use_partitions)
                loss = supervised_loss(out.y_hat, batch.y)
                objective = loss
                if regularized:
                    n_batches += 1
                    if regularizer == "cfr":
                        balance = balance_term(out.z, batch.t, **sinkhorn)
                        reg, all_skipped = balance.value, balance.skipped
                    else:
                        balance = balance_term(out.z_c, batch.t, **sinkhorn)
                        perm = draw_permutation(labelled_rng(seed, "perm:stage2", epoch, batch_number), batch.n_graphs)
                        dependence = dependence_term(out.z_c, out.z_y, perm, **sinkhorn)
                        reg = balance.value + dependence.value
                        all_skipped = balance.skipped and dependence.skipped
                        skipped_dependence += int(dependence.skipped)
                    skipped_balance += int(balance.skipped)
                    if all_skipped:
                        skipped += 1
                    else:
                        reg_total += reg.item()
                        reg_count += 1
                    objective = loss + reg * lam
                total += loss.item() * batch.n_graphs
                tape.backward(objective)
            params, state = adam_step(params, params.grads(), state, cfg.learning_rate, (cfg.beta1, cfg.beta2), cfg.adam_eps)

        val_loss = factual_loss(params, val)
        reg_value = reg_total / reg_count if reg_count else None
        log.add("stage2", epoch, total / len(train), val_loss, reg_value)
        if val_loss < best_loss:
            best_params, best_loss = params, val_loss
        logger.debug(f"stage2 epoch {epoch}: train_loss={total / len(train):.6f} val_loss={val_loss:.6f}")

    for term, count in (("balance", skipped_balance), ("dependence", skipped_dependence)):
        if n_batches and count / n_batches > cfg.skip_warn_fraction:
            log_structured(logger, "warning", "regularizer term skipped on many batches", {
                "term": term,
                "skipped": count,
                "batches": n_batches,
                "fraction": round(count / n_batches, 4),
            })
    log_structured(logger, "info", "outcome model trained", {
        "encoder": encoder,
        "regularizer": regularizer if regularized else "none",
        "lambda": lam,
        "best_val_loss": round(float(best_loss), 6),
    })
    return TarnetFit(best_params, log, float(best_loss), lam, n_batches, skipped, skipped_balance, skipped_dependence)


def train_stage2(
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    partitions: Sequence[NodePartition],
    lam: float,
    cfg: TrainConfig,
    seed: int,
) -> TarnetFit:
    """GIN TARNet with the balance and dependence regularizers on a frozen partition.

    ``partitions`` holds one NodePartition per train sample. With ``lam == 0``
    the regularizers are never evaluated and the run matches the plain GNN.
    """
    if len(partitions) != len(train):
        raise ContractError(f"{len(partitions)} partitions for {len(train)} train samples")
    return _train_tarnet(train, val, cfg, seed, "gin", lam, "graphtee", partitions)


def pick_lambda(scores: Sequence[Tuple[float, float]]) -> float:
    """Lambda with the lowest validation loss; ties go to the smaller lambda."""
    if not scores:
        raise ParameterError("lambda grid is empty")
    best_lam, best_loss = None, np.inf
    for lam, loss in sorted(scores, key=lambda item: item[0]):
        if best_lam is None or loss < best_loss:
            best_lam, best_loss = lam, loss
    return float(best_lam)


@dataclass
class LambdaSelection:
    best_lambda: float
    scores: List[Tuple[float, float]]
    best_fit: TarnetFit
    fits: Dict[float, TarnetFit] = field(default_factory=dict)

    def report(self) -> List[Dict[str, float]]:
        return [{"lambda": lam, "val_loss": loss} for lam, loss in self.scores]


def select_lambda(
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
    encoder: str = "gin",
    regularizer: str = "graphtee",
    partitions: Optional[Sequence[NodePartition]] = None,
) -> LambdaSelection:
    """Train once per grid value and keep the lambda with the lowest validation factual loss."""
    fits: Dict[float, TarnetFit] = {}
    for lam in cfg.lambda_grid:
        fits[float(lam)] = _train_tarnet(train, val, cfg, seed, encoder, float(lam), regularizer, partitions)
    scores = [(lam, fit.best_val_loss) for lam, fit in fits.items()]
    best = pick_lambda(scores)
    log_structured(logger, "info", "lambda selected", {
        "regularizer": regularizer,
        "encoder": encoder,
        "lambda": best,
        "val_loss": round(fits[best].best_val_loss, 6),
        "grid_size": len(scores),
    })
    return LambdaSelection(best, scores, fits[best], fits)


# Method dispatch


@dataclass
class FitResult:
    """A trained estimator and what was learned along the way."""

    method: str
    predictor: Any
    val_loss: float
    log: TrainLog
    selected_lambda: Optional[float] = None
    lambda_report: List[Dict[str, float]] = field(default_factory=list)
    selector: Optional[Any] = None
    selector_params: Optional[ModelParams] = None


def build_selector(
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
) -> Tuple[Any, Optional[Stage1Result]]:
    if cfg.selector == "oracle":
        return OracleSelector(cfg.k_percent), None
    stage1 = train_stage1(train, val, cfg, seed)
    return LearnedSelector(stage1.params, cfg.k_percent), stage1


def _fit_regularized(
    method: str,
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
    encoder: str,
    regularizer: str,
    partitions: Optional[Sequence[NodePartition]],
) -> Tuple[TarnetFit, Optional[float], List[Dict[str, float]]]:
    if cfg.fixed_lambda is not None:
        fit = _train_tarnet(train, val, cfg, seed, encoder, cfg.fixed_lambda, regularizer, partitions)
        return fit, cfg.fixed_lambda, [{"lambda": cfg.fixed_lambda, "val_loss": fit.best_val_loss}]
    selection = select_lambda(train, val, cfg, seed, encoder, regularizer, partitions)
    return selection.best_fit, selection.best_lambda, selection.report()


def fit_method(
    method: str,
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
) -> FitResult:
    """Train one of ``mean``, ``deepsets``, ``deepsets_cfr``, ``gnn``, ``gnn_cfr`` or ``graphtee``.

    GIN-based methods share their initialization and batch streams, so a
    zero lambda reproduces the plain GNN run exactly.
    """
    if method == "mean":
        _require(train, "train")
        predictor = MeanBaseline.fit(train, cfg.pooled_mean)
        t = np.array([sample.t for sample in val], dtype=np.float64)
        y = np.array([sample.y_obs for sample in val])
        val_loss = float(np.mean((predictor.predict(val, t) - y) ** 2)) if val else float("nan")
        return FitResult(method, predictor, val_loss, TrainLog())
    if method in ("deepsets", "gnn"):
        encoder = "gin" if method == "gnn" else "deepsets"
        fit = _train_tarnet(train, val, cfg, seed, encoder)
        return FitResult(method, TarnetPredictor(fit.params), fit.best_val_loss, fit.log)
    if method in ("deepsets_cfr", "gnn_cfr"):
        encoder = "gin" if method == "gnn_cfr" else "deepsets"
        fit, lam, report = _fit_regularized(method, train, val, cfg, seed, encoder, "cfr", None)
        return FitResult(method, TarnetPredictor(fit.params), fit.best_val_loss, fit.log, lam, report)
    if method == "graphtee":
        selector, stage1 = build_selector(train, val, cfg, seed)
        partitions = selector.partitions(train)
        fit, lam, report = _fit_regularized(method, train, val, cfg, seed, "gin", "graphtee", partitions)
        log = TrainLog()
        if stage1 is not None:
            log.extend(stage1.log)
        log.extend(fit.log)
        return FitResult(
            method,
            TarnetPredictor(fit.params),
            fit.best_val_loss,
            log,
            lam,
            report,
            selector=selector,
            selector_params=stage1.params if stage1 is not None else None,
        )
    raise ParameterError(f"unknown method {method!r}")


def train_baseline(
    name: str,
    train: Sequence[GraphSample],
    val: Sequence[GraphSample],
    cfg: TrainConfig,
    seed: int,
):
    """Predictor of one of the five baselines."""
    if name not in ("mean", "deepsets", "deepsets_cfr", "gnn", "gnn_cfr"):
        raise ParameterError(f"unknown baseline {name!r}")
    return fit_method(name, train, val, cfg, seed).predictor
