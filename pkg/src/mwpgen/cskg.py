"""Commonsense knowledge graph ingestion and topic-scoped instances.

Triple files are UTF-8 text, one "head<TAB>relation<TAB>tail" per line,
'#' comments and blank lines skipped. Topics are declared with the reserved
relation ``is_topic`` (tail "true").
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Set, Tuple

from .graph import LabeledGraph, LeviGraph, levi_transform

log = logging.getLogger(__name__)

TOPIC_RELATION = "is_topic"


class ParseError(ValueError):
    def __init__(self, message, line_number):
        super().__init__(f"{message} (line {line_number})")
        self.line_number = line_number


class EmptyGraph(ValueError):
    pass


class TopicNotFound(KeyError):
    pass


class EntityNotFound(KeyError):
    pass


class DisconnectedBinding(ValueError):
    pass


@dataclass(frozen=True)
class VariableBinding:
    x: str
    y: str

    def __post_init__(self):
        if self.x == self.y:
            raise ValueError("x and y must bind to distinct entities")


@dataclass
class KnowledgeGraph:
    triples: List[Tuple[str, str, str]]
    entities: Set[str]
    topics: Set[str]
    duplicates_dropped: int = 0

    def neighbors(self, entity):
        """Undirected adjacency, lexicographically sorted for determinism."""
        out = set()
        for h, _, t in self.triples:
            if h == entity:
                out.add(t)
            elif t == entity:
                out.add(h)
        return sorted(out)


@dataclass
class CskgInstance:
    topic: str
    binding: VariableBinding
    subgraph: LabeledGraph
    levi: LeviGraph


def parse_triples(lines, source="<memory>"):
    seen = set()
    triples = []
    duplicates = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"expected 3 tab-separated fields, found {len(fields)}", lineno
            )
        triple = tuple(f.strip() for f in fields)
        if any(not f for f in triple):
            raise ParseError("empty field in triple", lineno)
        if triple in seen:
            duplicates += 1
            continue
        seen.add(triple)
        triples.append(triple)
    if not triples:
        raise EmptyGraph(f"no triples in {source}")
    if duplicates:
        log.warning("%s: dropped %d duplicate triples", source, duplicates)
    topics = {h for h, r, t in triples if r == TOPIC_RELATION and t == "true"}
    content = [t for t in triples if t[1] != TOPIC_RELATION]
    entities = {h for h, _, _ in content} | {t for _, _, t in content} | topics
    return KnowledgeGraph(content, entities, topics, duplicates)


def load_triples(path):
    with open(path, encoding="utf-8") as f:
        return parse_triples(f, source=str(path))


def serialize(kg):
    lines = [f"{t}\t{TOPIC_RELATION}\ttrue" for t in sorted(kg.topics)]
    lines.extend(f"{h}\t{r}\t{t}" for h, r, t in kg.triples)
    return "\n".join(lines) + "\n"


def topic_instance(kg, topic, binding, depth=2):
    """Topic-scoped subgraph: BFS closure to ``depth`` from topic and both
    bound entities, with the Levi transform applied."""
    if topic not in kg.topics:
        raise TopicNotFound(topic)
    for entity in (binding.x, binding.y):
        if entity not in kg.entities:
            raise EntityNotFound(entity)

    reached = set()
    order = []
    frontier = deque()
    for seed in (topic, binding.x, binding.y):
        if seed not in reached:
            reached.add(seed)
            order.append(seed)
            frontier.append((seed, 0))
    while frontier:
        node, d = frontier.popleft()
        if d == depth:
            continue
        for nb in kg.neighbors(node):
            if nb not in reached:
                reached.add(nb)
                order.append(nb)
                frontier.append((nb, d + 1))

    triples = [(h, r, t) for h, r, t in kg.triples if h in reached and t in reached]
    used = {h for h, _, _ in triples} | {t for _, _, t in triples}
    nodes = [n for n in order if n in used or n in (topic, binding.x, binding.y)]
    subgraph = LabeledGraph(nodes, triples)
    _check_connected(subgraph, topic, binding)
    return CskgInstance(topic, binding, subgraph, levi_transform(subgraph))


def _check_connected(subgraph, topic, binding):
    adjacency: Dict[str, Set[str]] = {n: set() for n in subgraph.nodes}
    for h, _, t in subgraph.edges:
        adjacency[h].add(t)
        adjacency[t].add(h)
    reached = {topic}
    stack = [topic]
    while stack:
        for nb in adjacency[stack.pop()]:
            if nb not in reached:
                reached.add(nb)
                stack.append(nb)
    for entity in (binding.x, binding.y):
        if entity not in reached:
            raise DisconnectedBinding(
                f"entity {entity!r} is not connected to topic {topic!r}"
            )
