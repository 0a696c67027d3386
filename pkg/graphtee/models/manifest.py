from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from graphtee.models.config import DatasetConfig

STREAMS = ("topology", "covariates", "treatment", "gen_weights", "noise", "split")


class DatasetManifest(BaseModel):
    """Everything needed to regenerate a dataset bit-exactly."""
    model_config = ConfigDict(extra="forbid")

    master_seed: int = Field(..., ge=0, description="Seed every stream derives from")
    sub_seeds: Dict[str, int] = Field(..., description="Sub-seed of each labelled random stream")
    config: DatasetConfig = Field(..., description="Generation settings")
    n_samples: int = Field(..., ge=1, description="Number of generated graphs")
    tu_digest: Optional[str] = Field(None, description="Digest of the ingested TU topologies")
    config_hash: str = Field(..., description="Hash of the dataset config and master seed")
    tool_version: str = Field(..., description="Version of graphtee that wrote the file")
