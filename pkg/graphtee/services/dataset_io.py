"""Dataset files: one manifest record, then one record per graph."""

from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from graphtee.core.exceptions import AppException, DatasetFormatError
from graphtee.core.logging import get_logger
from graphtee.models.manifest import DatasetManifest
from graphtee.services.graphs import GraphSample, Topology
from graphtee.services.records import read_records, write_records

logger = get_logger(__name__)

MANIFEST_KIND = "manifest"


def sample_to_record(sample: GraphSample) -> Dict[str, Any]:
    return {
        "kind": "sample",
        "id": sample.id,
        "n_nodes": sample.n_nodes,
        "edges": sample.topology.edges.tolist(),
        "d": int(sample.x.shape[1]),
        "x": sample.x.reshape(-1).tolist(),
        "t": sample.t,
        "y0": sample.y0,
        "y1": sample.y1,
        "y_obs": sample.y_obs,
        "split": sample.split,
    }


def record_to_sample(record: Dict[str, Any]) -> GraphSample:
    n_nodes = int(record["n_nodes"])
    d = int(record["d"])
    x = np.asarray(record["x"], dtype=np.float64)
    if x.size != n_nodes * d:
        raise DatasetFormatError(f"covariates hold {x.size} values, expected {n_nodes} x {d}")
    edges = np.asarray(record["edges"], dtype=np.int64).reshape(-1, 2)
    sample = GraphSample(
        id=str(record["id"]),
        topology=Topology(n_nodes, edges),
        x=x.reshape(n_nodes, d),
        t=int(record["t"]),
        y0=float(record["y0"]),
        y1=float(record["y1"]),
        split=str(record["split"]),
    )
    if sample.y_obs != float(record["y_obs"]):
        raise DatasetFormatError(f"sample {sample.id}: y_obs does not match its treatment arm")
    return sample


def save_dataset(samples: Sequence[GraphSample], manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    """Write a dataset file; identical inputs give byte-identical files."""
    path = write_records(
        path,
        MANIFEST_KIND,
        {"manifest": manifest.model_dump(mode="json")},
        (sample_to_record(sample) for sample in samples),
    )
    logger.info(f"Wrote {len(samples)} samples to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> Tuple[List[GraphSample], DatasetManifest]:
    """Exact inverse of ``save_dataset``.

    Raises:
        DatasetFormatError: On version mismatch, truncation, checksum failure
            or a malformed record (the message names the record index)
    """
    header, records = read_records(path, MANIFEST_KIND)
    try:
        manifest = DatasetManifest.model_validate(header.get("manifest"))
    except ValidationError as exc:
        raise DatasetFormatError(f"{path}: invalid manifest: {exc}") from None

    samples: List[GraphSample] = []
    for index, record in enumerate(records):
        try:
            if record.get("kind") != "sample":
                raise DatasetFormatError("not a sample record")
            samples.append(record_to_sample(record))
        except (AppException, KeyError, TypeError, ValueError) as exc:
            detail = exc.detail if isinstance(exc, AppException) else repr(exc)
            raise DatasetFormatError(
                f"{path}: record {index} is malformed: {detail}",
                {"path": str(path), "record": index},
            ) from None

    dims = {sample.x.shape[1] for sample in samples}
    if len(dims) > 1:
        raise DatasetFormatError(f"{path}: samples disagree on the covariate dimension {sorted(dims)}")
    if len(samples) != manifest.n_samples:
        raise DatasetFormatError(
            f"{path}: manifest announces {manifest.n_samples} samples, file holds {len(samples)}"
        )
    return samples, manifest


def split_samples(samples: Sequence[GraphSample], split: str) -> List[GraphSample]:
    return [sample for sample in samples if sample.split == split]
