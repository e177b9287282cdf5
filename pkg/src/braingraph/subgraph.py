"""Pivotal-node subgraphs: group means, edge cutoffs, DOT export.

Group-level matrices are entrywise means of the group's differential graphs.
An edge (j, k), j < k, survives a symmetric cutoff when both endpoints are
pivotal and |matrix[j][k]| >= cutoff; weights keep their sign so concordant
(positive) and discordant (negative) pairs stay distinguishable. DOT output is
byte-deterministic: nodes sorted by name, edges sorted by endpoint names,
weights printed with 6 significant digits, negative edges dashed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diffgraph import DifferentialGraph
from .selection import PivotalNodeSet


@dataclass(frozen=True)
class EdgeList:
    """Signed edges over named nodes, with the cutoff that produced them."""

    edges: tuple[tuple[int, int, float], ...]
    node_names: dict[int, str]
    cutoff: float


def group_mean_graph(
    graphs: Sequence[DifferentialGraph], group: str
) -> np.ndarray:
    """Entrywise mean over the group's matrices."""
    members = [g.matrix for g in graphs if g.group == group]
    if not members:
        raise ValueError(f"no patients in group {group!r}")
    return np.mean(members, axis=0)


def apply_cutoff(
    matrix: np.ndarray,
    nodes: PivotalNodeSet | Sequence[int],
    cutoff: float,
    node_names: Sequence[str] | None = None,
) -> EdgeList:
    """Keep off-diagonal pivotal pairs with |weight| >= cutoff."""
    if cutoff <= 0.0:
        raise ValueError("cutoff must be positive")
    indices = list(nodes.indices if isinstance(nodes, PivotalNodeSet) else nodes)
    matrix = np.asarray(matrix)

    def name(i: int) -> str:
        return node_names[i] if node_names is not None else str(i)

    edges = []
    for ai, a in enumerate(indices):
        for b in indices[ai + 1 :]:
            w = float(matrix[a, b])
            if abs(w) >= cutoff:
                edges.append((a, b, w))
    return EdgeList(tuple(edges), {i: name(i) for i in indices}, cutoff)


def export_dot(edges: EdgeList) -> str:
    """Undirected DOT graph; deterministic bytes for identical input."""
    lines = ["graph G {"]
    for i in sorted(edges.node_names, key=lambda i: edges.node_names[i]):
        lines.append(f'  "{edges.node_names[i]}";')
    rendered = []
    for a, b, w in edges.edges:
        na, nb = sorted((edges.node_names[a], edges.node_names[b]))
        style = ", style=dashed" if w < 0 else ""
        rendered.append(f'  "{na}" -- "{nb}" [weight={w:.6g}{style}];')
    lines.extend(sorted(rendered))
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_dot(text: str) -> list[tuple[str, str, float]]:
    """Recover (name_a, name_b, weight) triples from `export_dot` output."""
    triples = []
    for line in text.splitlines():
        line = line.strip()
        if "--" not in line or "weight=" not in line:
            continue
        left, right = line.split("--", 1)
        name_a = left.strip().strip('"')
        name_b = right.split("[", 1)[0].strip().strip('"')
        attr = right.split("weight=", 1)[1]
        weight = float(attr.rstrip("];").split(",")[0])
        triples.append((name_a, name_b, weight))
    return triples


def edges_csv(edges: EdgeList) -> str:
    """CSV text `node_a,node_b,weight` using node names, full precision."""
    lines = ["node_a,node_b,weight"]
    for a, b, w in edges.edges:
        lines.append(f"{edges.node_names[a]},{edges.node_names[b]},{repr(float(w))}")
    return "\n".join(lines) + "\n"
