from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from graphtee.core.exceptions import ErrorRecord


class MetricsRow(BaseModel):
    """One (seed, method, axis value) cell of an experiment."""
    seed: int = Field(..., description="Master seed of the dataset")
    method: str = Field(..., description="Estimator name")
    axis_value: Optional[float] = Field(None, description="Sweep value, unset for plain experiments")
    sqrt_pehe: Optional[float] = Field(None, description="Root PEHE on the test split")
    eps_ate: Optional[float] = Field(None, description="Absolute ATE error on the test split")
    selection_recall: Optional[float] = Field(None, description="Share of test graphs whose partition holds the true confounder")
    selected_lambda: Optional[float] = Field(None, description="Lambda chosen on the validation split")
    val_loss: Optional[float] = Field(None, description="Validation factual loss of the final model")
    runtime_s: float = Field(0.0, description="Wall time of the cell")
    peak_rss_mb: float = Field(0.0, description="Resident memory of the worker after the cell")
    error: Optional[ErrorRecord] = Field(None, description="Failure when the cell did not complete")


class MetricAggregate(BaseModel):
    method: str
    axis_value: Optional[float] = None
    metric: str
    mean: float
    se: float
    n: int


class MetricsReport(BaseModel):
    """Per-seed rows plus mean and standard error per method."""
    config_hash: str
    tool_version: str
    axis: Optional[str] = None
    rows: List[MetricsRow] = Field(default_factory=list)
    aggregates: List[MetricAggregate] = Field(default_factory=list)


class LemmaCheck(BaseModel):
    """One exact inequality check on a random discrete joint."""
    lemma: str
    instance_seed: int
    lhs: float
    rhs: float
    slack: float
    violated: bool
    extra: Dict[str, float] = Field(default_factory=dict)


class BoundsReport(BaseModel):
    config_hash: str
    tool_version: str
    seed: int
    trials: int
    n_violations: int
    min_slack: Dict[str, float] = Field(default_factory=dict)
    checks: List[LemmaCheck] = Field(default_factory=list)
