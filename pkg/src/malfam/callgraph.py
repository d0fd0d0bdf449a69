"""Method-level call graphs and sensitive-behavior subgraph extraction.

A call graph is a directed graph whose nodes are methods (full signature
strings) and whose edges are call relations. Extraction keeps every
sensitive node, its direct callers and callees, and optionally a BFS
neighborhood over both edge directions, then takes the induced subgraph
on the retained nodes so relationships between nearby behaviors survive.
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Iterable

import numpy as np

from .dataset import KIND_PERMISSION, FeatureSchema
from .errors import ValidationError
from .fileio import dumps_json, read_json, write_json_atomic

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphNode:
    id: int
    sig: str
    sensitive: bool = False
    features: dict[int, float] = field(default_factory=dict)


@dataclass
class CallGraph:
    """Directed method-call graph; parallel calls collapse to one edge."""

    nodes: list[GraphNode]
    edges: list[tuple[int, int]]
    label: int | None = None

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        id_set = set(ids)
        if len(id_set) != len(ids):
            raise ValidationError("node ids are not unique")
        seen: set[tuple[int, int]] = set()
        for u, v in self.edges:
            if u not in id_set or v not in id_set:
                raise ValidationError(f"edge ({u},{v}) references a missing node")
            if (u, v) in seen:
                raise ValidationError(f"duplicate edge ({u},{v})")
            seen.add((u, v))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def node_by_id(self) -> dict[int, GraphNode]:
        return {n.id: n for n in self.nodes}

    def predecessors(self) -> dict[int, set[int]]:
        preds: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for u, v in self.edges:
            preds[v].add(u)
        return preds

    def successors(self) -> dict[int, set[int]]:
        succs: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for u, v in self.edges:
            succs[u].add(v)
        return succs

    def sensitive_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.sensitive]


@dataclass(frozen=True)
class SensitiveApiList:
    """Signature patterns marking sensitive nodes (exact or fnmatch-style)."""

    patterns: tuple[str, ...]

    def matches(self, sig: str) -> bool:
        for pat in self.patterns:
            if pat == sig:
                return True
            if ("*" in pat or "?" in pat or "[" in pat) and fnmatch.fnmatchcase(
                sig, pat
            ):
                return True
        return False

    @classmethod
    def from_file(cls, path: Path | str) -> "SensitiveApiList":
        path = Path(path)
        if path.suffix == ".json":
            obj = read_json(path)
            if not isinstance(obj, list):
                raise ValidationError(f"{path}: expected a JSON list of patterns")
            return cls(tuple(str(p) for p in obj))
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(ln.strip() for ln in lines if ln.strip()))


def save_sensitive_api_list(apis: SensitiveApiList, path: Path | str) -> None:
    write_json_atomic(path, list(apis.patterns))


@dataclass(frozen=True)
class SbsConfig:
    """hops = 0 keeps only direct predecessors/successors of sensitive nodes."""

    hops: int = 0

    def __post_init__(self):
        if self.hops < 0:
            raise ValidationError(f"hops must be >= 0, got {self.hops}")


def mark_sensitive(g: CallGraph, apis: SensitiveApiList) -> CallGraph:
    """Return a copy with the sensitive flag set iff the signature matches."""
    nodes = [replace(n, sensitive=apis.matches(n.sig)) for n in g.nodes]
    return CallGraph(nodes=nodes, edges=list(g.edges), label=g.label)


def extract_sbs(g: CallGraph, cfg: SbsConfig = SbsConfig()) -> CallGraph:
    """Extract the sensitive-behavior subgraph.

    Retains every sensitive node plus its direct predecessors and
    successors; with hops N > 0, a per-sensitive-node BFS over both edge
    directions (visited set reset per node) extends the neighborhood so
    retained nodes lie within undirected distance N+1 of some sensitive
    node. The result is the induced subgraph on the retained set.

    A graph with no sensitive nodes yields an empty subgraph (warned).
    """
    sensitive = sorted(g.sensitive_ids())
    if not sensitive:
        log.warning("graph has no sensitive nodes; subgraph is empty")
        return CallGraph(nodes=[], edges=[], label=g.label)
    preds = g.predecessors()
    succs = g.successors()

    retained: set[int] = set()
    for s in sensitive:
        retained.add(s)
        retained.update(preds[s])
        retained.update(succs[s])
        if cfg.hops > 0:
            visited = {s}
            queue: list[tuple[int, int]] = [(s, 0)]
            head = 0
            while head < len(queue):
                u, h = queue[head]
                head += 1
                if h > cfg.hops:
                    continue
                for x in preds[u] | succs[u]:
                    if x not in visited:
                        visited.add(x)
                        retained.add(x)
                        queue.append((x, h + 1))

    nodes = [n for n in g.nodes if n.id in retained]
    edges = [(u, v) for u, v in g.edges if u in retained and v in retained]
    return CallGraph(nodes=nodes, edges=edges, label=g.label)


@dataclass
class FeaturedGraph:
    """A subgraph whose nodes carry dense features over selected columns."""

    graph: CallGraph
    feature_indices: list[int]
    node_features: np.ndarray  # rows aligned to graph.nodes order
    label: int | None = None

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes


def assign_node_features(
    g: CallGraph, selected: Iterable[int], schema: FeatureSchema
) -> FeaturedGraph:
    """Project node features onto the selected columns.

    Permission features are app-level: for each selected permission
    column, the maximum value stored on any node is broadcast to every
    node. Missing entries are 0. An empty selection yields a 0-column
    matrix and a warning (downstream consumers reject it).
    """
    selected = list(selected)
    for i in selected:
        if not 0 <= i < schema.dimension:
            raise ValidationError(
                f"selected index {i} out of range for dimension {schema.dimension}"
            )
    if not selected:
        log.warning("empty feature selection; node features have 0 columns")
    app_level: dict[int, float] = {}
    for i in selected:
        if schema.kinds[i] == KIND_PERMISSION:
            app_level[i] = max(
                (n.features.get(i, 0.0) for n in g.nodes), default=0.0
            )
    X = np.zeros((g.n_nodes, len(selected)), dtype=np.float64)
    for r, node in enumerate(g.nodes):
        for c, i in enumerate(selected):
            X[r, c] = app_level[i] if i in app_level else node.features.get(i, 0.0)
    return FeaturedGraph(
        graph=g, feature_indices=selected, node_features=X, label=g.label
    )


@dataclass
class GraphStatsRow:
    family: str
    count: int
    avg_nodes: float
    median_nodes: float
    avg_edges: float
    median_edges: float
    total_bytes: int

    def to_json(self) -> dict:
        return self.__dict__.copy()


@dataclass
class GraphStats:
    """Per-family and overall size statistics, plus reduction vs originals."""

    rows: list[GraphStatsRow]
    overall: GraphStatsRow
    node_reduction: float | None = None
    edge_reduction: float | None = None
    combined_reduction: float | None = None

    def to_json(self) -> dict:
        return {
            "per_family": [r.to_json() for r in self.rows],
            "overall": self.overall.to_json(),
            "node_reduction": self.node_reduction,
            "edge_reduction": self.edge_reduction,
            "combined_reduction": self.combined_reduction,
        }


def _stats_row(family: str, graphs: list[CallGraph]) -> GraphStatsRow:
    nodes = [g.n_nodes for g in graphs]
    edges = [g.n_edges for g in graphs]
    nbytes = sum(len(dumps_json(graph_to_json(g)).encode()) for g in graphs)
    return GraphStatsRow(
        family=family,
        count=len(graphs),
        avg_nodes=float(np.mean(nodes)),
        median_nodes=float(median(nodes)),
        avg_edges=float(np.mean(edges)),
        median_edges=float(median(edges)),
        total_bytes=nbytes,
    )


def graph_stats(
    by_family: dict[str, list[CallGraph]],
    originals: dict[str, list[CallGraph]] | None = None,
) -> GraphStats:
    """Exact means/medians per family; empty families are omitted.

    When the paired original graphs are supplied, reports the fractional
    node/edge reduction of the extracted corpus relative to them.
    """
    rows = [
        _stats_row(fam, graphs)
        for fam, graphs in sorted(by_family.items())
        if graphs
    ]
    all_graphs = [g for graphs in by_family.values() for g in graphs]
    if not all_graphs:
        raise ValidationError("graph_stats needs at least one graph")
    overall = _stats_row("overall", all_graphs)

    node_red = edge_red = combined = None
    if originals:
        orig = [g for graphs in originals.values() for g in graphs]
        n0 = sum(g.n_nodes for g in orig)
        e0 = sum(g.n_edges for g in orig)
        n1 = sum(g.n_nodes for g in all_graphs)
        e1 = sum(g.n_edges for g in all_graphs)
        if n0 > 0:
            node_red = 1.0 - n1 / n0
        if e0 > 0:
            edge_red = 1.0 - e1 / e0
        if n0 + e0 > 0:
            combined = 1.0 - (n1 + e1) / (n0 + e0)
    return GraphStats(
        rows=rows,
        overall=overall,
        node_reduction=node_red,
        edge_reduction=edge_red,
        combined_reduction=combined,
    )


def graph_to_json(g: CallGraph) -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "sig": n.sig,
                "sensitive": n.sensitive,
                "features": {str(k): float(v) for k, v in sorted(n.features.items())},
            }
            for n in g.nodes
        ],
        "edges": [[u, v] for u, v in g.edges],
        "label": g.label,
    }


def graph_from_json(obj: dict) -> CallGraph:
    try:
        nodes = [
            GraphNode(
                id=int(n["id"]),
                sig=str(n["sig"]),
                sensitive=bool(n["sensitive"]),
                features={int(k): float(v) for k, v in n.get("features", {}).items()},
            )
            for n in obj["nodes"]
        ]
        edges = [(int(u), int(v)) for u, v in obj["edges"]]
        label = obj.get("label")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed graph JSON: {exc}") from exc
    return CallGraph(
        nodes=nodes, edges=edges, label=None if label is None else int(label)
    )


def save_graph(g: CallGraph, path: Path | str) -> None:
    write_json_atomic(path, graph_to_json(g))


def load_graph(path: Path | str) -> CallGraph:
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return graph_from_json(obj)
