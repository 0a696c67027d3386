"""Line-delimited JSON files with a checksummed header record.

Datasets and checkpoints share this layout: the first line is a header
``{kind, version, ..., n_records, checksum}`` followed by one record per
line. Floats are written with 17 significant digits so that loading
restores every value bit-exactly.
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from graphtee.core.exceptions import DatasetFormatError, EvaluationError

FORMAT_VERSION = 1


def render_value(value: Any) -> str:
    """Render a JSON value deterministically (sorted keys, 17-digit floats)."""
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if not math.isfinite(number):
            raise EvaluationError(f"cannot serialize non-finite value {number}")
        text = format(number, ".17g")
        # keep floats recognisable as floats on reload
        if all(ch in "-0123456789" for ch in text):
            text += ".0"
        return text
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, np.ndarray):
        return render_value(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(render_value(item) for item in value) + "]"
    if isinstance(value, Mapping):
        items = sorted(value.items())
        return "{" + ",".join(f"{json.dumps(str(k))}:{render_value(v)}" for k, v in items) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def checksum_lines(lines: Iterable[str]) -> str:
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def write_records(path: Union[str, Path], kind: str, header: Dict[str, Any], records: Iterable[Mapping[str, Any]]) -> Path:
    """Write a header line plus one line per record; returns the path."""
    lines = [render_value(record) for record in records]
    full_header = dict(header)
    full_header.update({
        "kind": kind,
        "version": FORMAT_VERSION,
        "n_records": len(lines),
        "checksum": checksum_lines(lines),
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(render_value(full_header) + "\n")
        for line in lines:
            handle.write(line + "\n")
    return path


def read_records(path: Union[str, Path], kind: str) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Inverse of ``write_records``.

    Raises:
        DatasetFormatError: On a wrong kind or version, an unparsable record
            (named by its index), a record count mismatch or a bad checksum
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"{path} does not exist", {"path": str(path)})
    lines = path.read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path} is empty", {"path": str(path)})

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: header is not valid JSON: {exc}", {"path": str(path)}) from None
    if not isinstance(header, dict) or header.get("kind") != kind:
        raise DatasetFormatError(f"{path}: expected a {kind} header", {"path": str(path)})
    if header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(
            f"{path}: format version {header.get('version')} is not supported (expected {FORMAT_VERSION})",
            {"path": str(path), "version": header.get("version")},
        )

    body = lines[1:]
    records: List[Dict[str, Any]] = []
    for index, line in enumerate(body):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(
                f"{path}: record {index} is not valid JSON: {exc}",
                {"path": str(path), "record": index},
            ) from None

    expected = header.get("n_records")
    if expected != len(records):
        raise DatasetFormatError(
            f"{path}: truncated file, header announces {expected} records, found {len(records)}",
            {"path": str(path), "expected": expected, "found": len(records)},
        )
    if header.get("checksum") != checksum_lines(body):
        raise DatasetFormatError(f"{path}: checksum mismatch", {"path": str(path)})
    return header, records


def write_jsonl(path: Union[str, Path], records: Iterable[Mapping[str, Any]]) -> Path:
    """Plain line-delimited records without a header (logs, reports)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(render_value(record) + "\n")
    return path


def write_json(path: Union[str, Path], payload: Mapping[str, Any]) -> Path:
    """Single deterministic JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_value(payload) + "\n", encoding="utf-8")
    return path
