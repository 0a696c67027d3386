"""Run configuration: dataset, training and experiment settings."""

import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from graphtee.core.exceptions import ConfigurationError
from graphtee.core.utils import config_hash

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("mean", "deepsets", "deepsets_cfr", "gnn", "gnn_cfr", "graphtee")
DEFAULT_LAMBDA_GRID = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0]
SWEEP_AXES = ("alpha", "lambda", "n_nodes")


class DatasetConfig(BaseModel):
    """How a dataset is generated; stored verbatim in the dataset manifest."""
    model_config = ConfigDict(extra="forbid")

    source: Literal["synthetic", "tu"] = Field("synthetic", description="Barabási–Albert graphs or a TU dataset")
    n_graphs: int = Field(2000, ge=1, description="Number of synthetic graphs")
    n_nodes: int = Field(100, ge=2, description="Nodes per synthetic graph")
    m: int = Field(2, ge=1, description="Barabási–Albert attachment count")
    d: int = Field(20, ge=1, description="Covariate dimension")
    alpha: float = Field(0.5, description="Strength of the treatment-assignment bias")
    c_s: Optional[float] = Field(None, description="Outcome scale; 1.0 for synthetic, 0.5 for TU when unset")
    noise_variance: float = Field(0.01, ge=0.0, description="Variance of the outcome noise")
    shared_noise: bool = Field(False, description="Use one noise draw for both potential outcomes")
    normalize_treatment_sum: bool = Field(False, description="Divide the confounder covariate sum by d")
    train_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    val_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    tu_dir: Optional[str] = Field(None, description="Folder of the TU dataset")
    tu_name: Optional[str] = Field(None, description="TU dataset name, inferred when unset")
    max_nodes: int = Field(500, ge=1, description="TU graphs with more nodes are dropped")
    drop_isolated: bool = Field(False, description="Remove degree-0 nodes from TU graphs")

    @model_validator(mode="after")
    def check_sizes(self) -> "DatasetConfig":
        if self.source == "synthetic" and self.m >= self.n_nodes:
            raise ValueError(f"m must be smaller than n_nodes ({self.m} >= {self.n_nodes})")
        if self.train_fraction + self.val_fraction >= 1.0:
            raise ValueError("train_fraction + val_fraction must leave room for a test split")
        return self

    @property
    def outcome_scale(self) -> float:
        if self.c_s is not None:
            return self.c_s
        return 1.0 if self.source == "synthetic" else 0.5


class TrainConfig(BaseModel):
    """Optimization and model settings shared by every estimator."""
    model_config = ConfigDict(extra="forbid")

    method: str = Field("graphtee", description="Estimator trained by the train command")
    fixed_lambda: Optional[float] = Field(None, ge=0.0, description="Use this lambda instead of grid selection")
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(1e-3, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    epochs_stage1: int = Field(300, ge=1)
    epochs_stage2: int = Field(300, ge=1)
    lambda_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    k_percent: float = Field(10.0, gt=0.0, le=100.0)
    sinkhorn_eps: float = Field(0.1, gt=0.0)
    sinkhorn_iters: int = Field(100, ge=1)
    sinkhorn_relative: bool = Field(True, description="Scale eps by the median pairwise cost")
    width: int = Field(32, ge=1, description="Representation width")
    n_layers: int = Field(3, ge=1, description="Encoder and head depth")
    selector: Literal["learned", "oracle"] = Field("learned", description="Confounder selector used in stage 2")
    pooled_mean: bool = Field(False, description="Mean baseline ignores the treatment arm")
    skip_warn_fraction: float = Field(0.2, ge=0.0, le=1.0)

    @field_validator("method")
    @classmethod
    def known_method(cls, v: str) -> str:
        if v not in METHODS:
            raise ValueError(f"unknown method {v!r}; expected one of {', '.join(METHODS)}")
        return v

    @field_validator("lambda_grid")
    @classmethod
    def non_empty_grid(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("lambda_grid must not be empty")
        if any(value < 0 for value in v):
            raise ValueError("lambda values must be >= 0")
        return v


class ExperimentConfig(BaseModel):
    """Methods, seeds and the optional sweep axis of an experiment."""
    model_config = ConfigDict(extra="forbid")

    methods: List[str] = Field(default_factory=lambda: list(METHODS))
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    axis: Optional[Literal["alpha", "lambda", "n_nodes"]] = None
    values: List[float] = Field(default_factory=list)

    @field_validator("methods")
    @classmethod
    def known_methods(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one method is required")
        unknown = [name for name in v if name not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}")
        return v

    @field_validator("seeds")
    @classmethod
    def non_empty_seeds(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("at least one seed is required")
        if any(seed < 0 for seed in v):
            raise ValueError("seeds must be >= 0")
        return v


class RunConfig(BaseModel):
    """Effective configuration of one command invocation."""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0, description="Master seed; all randomness derives from it")
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)

    def digest(self) -> str:
        return config_hash(self.model_dump(mode="json"))

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Apply dotted-key overrides such as ``{"dataset.alpha": 1.0}``."""
        payload = self.model_dump(mode="json")
        for key, value in overrides.items():
            if value is None:
                continue
            target = payload
            *parents, leaf = key.split(".")
            for part in parents:
                target = target[part]
            target[leaf] = value
        return RunConfig.model_validate(payload)


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Load a TOML or JSON run configuration; ``None`` gives the defaults.

    Raises:
        ConfigurationError: If the file is missing, unreadable or invalid
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as handle:
                payload = tomllib.load(handle)
        elif path.suffix == ".json":
            payload = json.loads(path.read_text(encoding="utf-8"))
        else:
            raise ConfigurationError(f"unsupported config format {path.suffix!r}; use .toml or .json")
        return RunConfig.model_validate(payload)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config {path}: {exc}") from None
