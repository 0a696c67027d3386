"""Named-tensor checkpoints in the line-delimited record format."""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from graphtee import __version__
from graphtee.core.exceptions import DatasetFormatError
from graphtee.core.logging import get_logger
from graphtee.ndgrad import ModelParams
from graphtee.services.records import read_records, write_records

logger = get_logger(__name__)

CHECKPOINT_KIND = "checkpoint"


def save_checkpoint(
    models: Dict[str, ModelParams],
    path: Union[str, Path],
    config_hash: str,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write one or more parameter sets, keyed by group (e.g. ``outcome``, ``selector``).

    Args:
        models: Parameter sets by group name
        path: Target file
        config_hash: Hash of the run configuration
        metadata: Extra header fields such as the method or selected lambda

    Returns:
        The written path
    """
    records = []
    for group, params in models.items():
        for name, tensor in params.items():
            records.append({
                "group": group,
                "name": name,
                "shape": list(tensor.shape),
                "data": tensor.data.reshape(-1).tolist(),
            })
    header = {
        "architectures": {group: params.architecture for group, params in models.items()},
        "config_hash": config_hash,
        "tool_version": __version__,
        "metadata": metadata or {},
    }
    path = write_records(path, CHECKPOINT_KIND, header, records)
    logger.info(f"Wrote checkpoint {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, ModelParams], Dict[str, Any]]:
    """Inverse of ``save_checkpoint``; returns the parameter sets and the header."""
    header, records = read_records(path, CHECKPOINT_KIND)
    architectures = header.get("architectures") or {}
    values: Dict[str, Dict[str, np.ndarray]] = {group: {} for group in architectures}
    for index, record in enumerate(records):
        try:
            group = record["group"]
            shape = tuple(int(s) for s in record["shape"])
            values[group][record["name"]] = np.asarray(record["data"], dtype=np.float64).reshape(shape)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(
                f"{path}: record {index} is malformed: {exc!r}",
                {"path": str(path), "record": index},
            ) from None
    models = {group: ModelParams(values[group], architectures[group]) for group in architectures}
    return models, header
