import hashlib
import json
from pathlib import Path
from typing import Any, Union

import numpy as np

HASH_LENGTH = 16


def canonical_json(payload: Any) -> str:
    """Render a JSON-compatible payload with sorted keys and no whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(payload: Any) -> str:
    """Stable short hash of a configuration payload.

    Args:
        payload: JSON-compatible data (typically ``model_dump(mode="json")``)

    Returns:
        The first 16 hex characters of the SHA-256 of the canonical JSON
    """
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:HASH_LENGTH]


def label_key(label: str) -> int:
    """Map a stream label to a 32-bit integer spawn key."""
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:4], "big")


def derive_seed(master_seed: int, label: str) -> int:
    """Derive the sub-seed of a labelled random stream from a master seed.

    Args:
        master_seed: Non-negative master seed
        label: Stream label such as ``"covariates"``

    Returns:
        A 63-bit non-negative integer seed
    """
    sequence = np.random.SeedSequence(master_seed, spawn_key=(label_key(label),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def stream_rng(seed: int, *index: int) -> np.random.Generator:
    """Counter-based substream ``index`` of the stream seeded by ``seed``.

    Substreams are independent of each other and of the order in which they
    are created, so per-graph generation can run in any order or in parallel.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(i) for i in index)))


def labelled_rng(seed: int, label: str, *index: int) -> np.random.Generator:
    """Substream of ``seed`` identified by a text label plus optional counters."""
    return stream_rng(seed, label_key(label), *index)


def output_path(out_dir: Union[str, Path], command: str, digest: str, ext: str) -> Path:
    """Stable artifact name ``{command}.{hash}.{ext}`` under ``out_dir``."""
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory / f"{command}.{digest}.{ext}"

