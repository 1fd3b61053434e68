"""Levi transformation of labeled directed graphs and the row-normalized
adjacency consumed by the graph encoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

REVERSE_SUFFIX = "_r"


@dataclass
class LabeledGraph:
    """Directed graph with string nodes and relation-labeled edges."""

    nodes: List[str]
    edges: List[Tuple[str, str, str]]  # (head, relation, tail)

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("graph must have at least one node")
        index = {}
        for i, n in enumerate(self.nodes):
            if n in index:
                raise ValueError(f"duplicate node {n!r}")
            index[n] = i
        for head, _, tail in self.edges:
            if head not in index or tail not in index:
                raise ValueError(f"edge endpoint missing from node set: ({head}, {tail})")


@dataclass
class LeviGraph:
    """Unlabeled directed graph with relation nodes made explicit.

    ``tokens[i]`` is the vocabulary token of node ``i``. The first
    ``num_source_nodes`` entries are the source nodes in input order;
    relation nodes follow in edge order, forward before reverse. ``kinds``
    parallels ``edges`` with 'forward', 'reverse' or 'self'.
    """

    tokens: List[str]
    edges: List[Tuple[int, int]]
    kinds: List[str]
    num_source_nodes: int
    # per source edge: (forward relation node index, reverse index or -1)
    relation_nodes: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def num_nodes(self):
        return len(self.tokens)


def levi_transform_base(g):
    """Levi transform without reverse nodes or self-loops: |V'| = |V| + |E|."""
    tokens = list(g.nodes)
    edges = []
    kinds = []
    relation_nodes = []
    index = {n: i for i, n in enumerate(g.nodes)}
    for head, rel, tail in g.edges:
        r = len(tokens)
        tokens.append(rel)
        relation_nodes.append((r, -1))
        edges.append((index[head], r))
        edges.append((r, index[tail]))
        kinds.extend(["forward", "forward"])
    return LeviGraph(tokens, edges, kinds, len(g.nodes), relation_nodes)


def levi_transform(g):
    """Edge-enhanced Levi transform with reverse relation nodes and self-loops.

    Each labeled source edge (v, r, u) yields nodes r and r_r and edges
    v->r, r->u, u->r_r, r_r->v. Every node gets a self-loop.
    """
    tokens = list(g.nodes)
    edges = []
    kinds = []
    relation_nodes = []
    index = {n: i for i, n in enumerate(g.nodes)}
    for head, rel, tail in g.edges:
        fwd = len(tokens)
        tokens.append(rel)
        rev = len(tokens)
        tokens.append(rel + REVERSE_SUFFIX)
        relation_nodes.append((fwd, rev))
        h, t = index[head], index[tail]
        edges.extend([(h, fwd), (fwd, t)])
        kinds.extend(["forward", "forward"])
        edges.extend([(t, rev), (rev, h)])
        kinds.extend(["reverse", "reverse"])
    for i in range(len(tokens)):
        edges.append((i, i))
        kinds.append("self")
    return LeviGraph(tokens, edges, kinds, len(g.nodes), relation_nodes)


def recover_source(levi):
    """Invert :func:`levi_transform` using the index maps."""
    nodes = levi.tokens[: levi.num_source_nodes]
    heads = {}
    tails = {}
    for (a, b), kind in zip(levi.edges, levi.kinds):
        if kind != "forward":
            continue
        if b >= levi.num_source_nodes > a:
            heads[b] = a
        elif a >= levi.num_source_nodes > b:
            tails[a] = b
    edges = []
    for fwd, _ in levi.relation_nodes:
        edges.append((nodes[heads[fwd]], levi.tokens[fwd], nodes[tails[fwd]]))
    return LabeledGraph(nodes, edges)


def row_normalize(levi):
    """Dense adjacency with a[v, u] = 1/indegree(v) for each in-neighbor u.

    Messages flow along edge direction: row v aggregates over nodes with an
    edge u -> v. Self-loops guarantee every row is non-empty.
    """
    n = levi.num_nodes
    a = np.zeros((n, n), dtype=np.float64)
    for u, v in levi.edges:
        a[v, u] = 1.0
    a /= a.sum(axis=1, keepdims=True)
    return a


def to_graphviz(levi, name="levi"):
    """Graphviz dump for documentation; reverse edges dashed, self-loops dotted."""
    lines = [f"digraph {name} {{"]
    for i, tok in enumerate(levi.tokens):
        shape = "box" if i >= levi.num_source_nodes else "ellipse"
        lines.append(f'  n{i} [label="{tok}", shape={shape}];')
    style = {"forward": "solid", "reverse": "dashed", "self": "dotted"}
    for (a, b), kind in zip(levi.edges, levi.kinds):
        lines.append(f"  n{a} -> n{b} [style={style[kind]}];")
    lines.append("}")
    return "\n".join(lines)
