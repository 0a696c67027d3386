"""Graph topologies: Barabási–Albert generation and TU-format ingestion."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from graphtee.core.exceptions import ConsistencyError, IngestionError, ParameterError, ParseError
from graphtee.core.logging import get_logger, log_structured

logger = get_logger(__name__)

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on nodes ``0..n_nodes-1``.

    ``edges`` is an ``(E, 2)`` integer array of canonical pairs ``u < v``,
    sorted lexicographically and free of duplicates.
    """

    n_nodes: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConsistencyError(f"a topology needs at least one node, got {self.n_nodes}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n_nodes:
                raise ConsistencyError(f"edge endpoint outside [0, {self.n_nodes})")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ConsistencyError("edges must be canonical pairs u < v without self-loops")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise ConsistencyError("duplicate edges")
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_pairs(cls, n_nodes: int, pairs: Iterable[Tuple[int, int]]) -> "Topology":
        """Build from arbitrary undirected pairs; self-loops and duplicates are dropped."""
        canonical: Set[Tuple[int, int]] = set()
        for u, v in pairs:
            u, v = int(u), int(v)
            if u != v:
                canonical.add((min(u, v), max(u, v)))
        return cls(n_nodes, np.array(sorted(canonical), dtype=np.int64).reshape(-1, 2))

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n_nodes).astype(np.int64)

    def edge_set(self) -> Set[Tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def message_index(self) -> Tuple[np.ndarray, np.ndarray]:
        """Source and destination arrays with every edge in both directions."""
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        return src, dst

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return self.n_nodes == other.n_nodes and np.array_equal(self.edges, other.edges)

    def __hash__(self) -> int:
        return hash((self.n_nodes, self.edges.tobytes()))


@dataclass
class GraphSample:
    """One target graph with covariates, treatment and both potential outcomes."""

    id: str
    topology: Topology
    x: np.ndarray
    t: int
    y0: float
    y1: float
    split: str

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[0] != self.topology.n_nodes:
            raise ConsistencyError(
                f"sample {self.id}: covariates {self.x.shape} do not match {self.topology.n_nodes} nodes"
            )
        if self.t not in (0, 1):
            raise ConsistencyError(f"sample {self.id}: treatment must be 0 or 1, got {self.t}")
        if self.split not in SPLITS:
            raise ConsistencyError(f"sample {self.id}: unknown split {self.split!r}")

    @property
    def y_obs(self) -> float:
        return self.y1 if self.t == 1 else self.y0

    @property
    def n_nodes(self) -> int:
        return self.topology.n_nodes

    @property
    def cate(self) -> float:
        return self.y1 - self.y0


def _random_subset(seq: Sequence[int], m: int, rng: np.random.Generator) -> List[int]:
    # Draw from the urn until m distinct nodes are hit
    targets: Set[int] = set()
    while len(targets) < m:
        targets.add(int(seq[rng.integers(len(seq))]))
    return sorted(targets)


def generate_ba(n: int, m: int, rng: np.random.Generator) -> Topology:
    """Barabási–Albert preferential attachment graph.

    Starts from ``m`` isolated nodes; node ``m`` joins all of them, and every
    later node attaches to ``m`` distinct nodes drawn from the list of
    existing endpoints, with each node repeated once per incident edge.

    Args:
        n: Number of nodes
        m: Edges attached from each new node, ``1 <= m < n``
        rng: Seeded generator

    Returns:
        Topology with exactly ``m * (n - m)`` edges
    """
    if m < 1 or m >= n:
        raise ParameterError(f"Barabási–Albert network must have m >= 1 and m < n, m = {m}, n = {n}")
    pairs: List[Tuple[int, int]] = []
    targets = list(range(m))
    repeated_nodes: List[int] = []
    for source in range(m, n):
        pairs.extend((target, source) for target in targets)
        repeated_nodes.extend(targets)
        repeated_nodes.extend([source] * m)
        if source + 1 < n:
            targets = _random_subset(repeated_nodes, m, rng)
    return Topology.from_pairs(n, pairs)


def highest_degree_index(topology: Topology, x: np.ndarray) -> int:
    """Node of maximal degree; ties go to the larger covariate sum, then the lower index."""
    degree = topology.degree
    covariate_sum = np.asarray(x, dtype=np.float64).sum(axis=1)
    candidates = np.flatnonzero(degree == degree.max())
    best = candidates[covariate_sum[candidates] == covariate_sum[candidates].max()]
    return int(best[0])


def highest_degree_node(sample: GraphSample) -> int:
    return highest_degree_index(sample.topology, sample.x)


def topology_digest(topologies: Sequence[Topology]) -> str:
    """SHA-256 over node counts and edge arrays, used to pin ingested sources."""
    digest = hashlib.sha256()
    for topology in topologies:
        digest.update(np.int64(topology.n_nodes).tobytes())
        digest.update(np.int64(topology.n_edges).tobytes())
        digest.update(np.ascontiguousarray(topology.edges).tobytes())
    return digest.hexdigest()


def _find_dataset_name(directory: Path) -> str:
    matches = sorted(directory.glob("*_graph_indicator.txt"))
    if not matches:
        raise IngestionError(f"no *_graph_indicator.txt file in {directory}", {"dir": str(directory)})
    if len(matches) > 1:
        raise IngestionError(f"several TU datasets in {directory}; pass the name explicitly")
    return matches[0].name[: -len("_graph_indicator.txt")]


def _read_ints(path: Path, width: int) -> List[Tuple[int, ...]]:
    rows: List[Tuple[int, ...]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            parts = [part.strip() for part in text.split(",")]
            if len(parts) != width:
                raise ParseError(str(path), line_number, f"expected {width} comma-separated values, got {text!r}")
            try:
                values = tuple(int(part) for part in parts)
            except ValueError:
                raise ParseError(str(path), line_number, f"not an integer list: {text!r}") from None
            if min(values) < 1:
                raise ParseError(str(path), line_number, "TU ids are 1-indexed")
            rows.append(values)
    return rows


def _drop_isolated(topology: Topology) -> Optional[Topology]:
    keep = np.flatnonzero(topology.degree > 0)
    if keep.size == 0:
        return None
    relabel = np.full(topology.n_nodes, -1, dtype=np.int64)
    relabel[keep] = np.arange(keep.size)
    return Topology(int(keep.size), relabel[topology.edges])


def ingest_tu(
    directory: Union[str, Path],
    max_nodes: int,
    name: Optional[str] = None,
    drop_isolated: bool = False,
) -> List[Topology]:
    """Read the graphs of a TU-format dataset.

    Args:
        directory: Folder holding ``<name>_A.txt`` and ``<name>_graph_indicator.txt``
        max_nodes: Graphs with more nodes are dropped
        name: Dataset name; inferred when the folder holds a single dataset
        drop_isolated: Remove degree-0 nodes and re-index

    Returns:
        Topologies in graph-id order
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestionError(f"TU directory {directory} does not exist", {"dir": str(directory)})
    name = name or _find_dataset_name(directory)
    indicator_path = directory / f"{name}_graph_indicator.txt"
    edges_path = directory / f"{name}_A.txt"
    for path in (indicator_path, edges_path):
        if not path.is_file():
            raise IngestionError(f"missing TU file {path}", {"path": str(path)})

    indicator = [row[0] for row in _read_ints(indicator_path, 1)]
    n_graphs = max(indicator) if indicator else 0
    node_graph = np.asarray(indicator, dtype=np.int64) - 1
    counts = np.bincount(node_graph, minlength=n_graphs)
    if np.any(counts == 0):
        raise ConsistencyError(f"{indicator_path}: graph ids are not contiguous")
    # TU node ids are global and grouped by graph
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    if np.any(np.diff(node_graph) < 0):
        raise ConsistencyError(f"{indicator_path}: nodes are not grouped by graph")

    per_graph: Dict[int, List[Tuple[int, int]]] = {g: [] for g in range(n_graphs)}
    for line_number, (u, v) in enumerate(_read_ints(edges_path, 2), start=1):
        u, v = u - 1, v - 1
        if u >= len(node_graph) or v >= len(node_graph):
            raise ConsistencyError(
                f"{edges_path}: edge {line_number} references node beyond {len(node_graph)}",
                {"path": str(edges_path), "line": line_number},
            )
        graph = int(node_graph[u])
        if int(node_graph[v]) != graph:
            raise ConsistencyError(
                f"{edges_path}: edge {line_number} joins graphs {graph + 1} and {int(node_graph[v]) + 1}",
                {"path": str(edges_path), "line": line_number},
            )
        per_graph[graph].append((u - int(offsets[graph]), v - int(offsets[graph])))

    topologies: List[Topology] = []
    dropped = 0
    for graph in range(n_graphs):
        n_nodes = int(counts[graph])
        if n_nodes > max_nodes:
            dropped += 1
            continue
        topology = Topology.from_pairs(n_nodes, per_graph[graph])
        if drop_isolated:
            topology = _drop_isolated(topology)
            if topology is None:
                dropped += 1
                continue
        topologies.append(topology)

    log_structured(logger, "info", "ingested TU dataset", {
        "dataset": name,
        "graphs_read": n_graphs,
        "graphs_kept": len(topologies),
        "graphs_dropped": dropped,
        "max_nodes": max_nodes,
    })
    return topologies


def write_tu(topologies: Sequence[Topology], directory: Union[str, Path], name: str) -> Path:
    """Serialize topologies as a TU dataset (both edge directions, 1-indexed)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offset = 0
    edge_lines: List[str] = []
    indicator_lines: List[str] = []
    for graph, topology in enumerate(topologies, start=1):
        indicator_lines.extend([str(graph)] * topology.n_nodes)
        for u, v in topology.edges:
            a, b = int(u) + offset + 1, int(v) + offset + 1
            edge_lines.append(f"{a}, {b}")
            edge_lines.append(f"{b}, {a}")
        offset += topology.n_nodes
    (directory / f"{name}_A.txt").write_text("\n".join(edge_lines) + ("\n" if edge_lines else ""), encoding="utf-8")
    (directory / f"{name}_graph_indicator.txt").write_text("\n".join(indicator_lines) + "\n", encoding="utf-8")
    return directory
