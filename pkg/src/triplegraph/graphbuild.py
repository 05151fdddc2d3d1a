"""Entity resolution over generated triples and scene-graph assembly.

Subject and object occurrences of every triple carry an attention trace.
Occurrences whose traces overlap by more than a threshold (generalized IoU)
are linked, connected components become nodes, and each triple becomes an
edge between the nodes of its subject and object.
"""
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels

SUBJECT = "subject"
OBJECT = "object"
ENTITY_KIND = "entity"
ATTRIBUTE_KIND = "attribute"


class UndefinedInputError(ValueError):
    """IoU of two all-zero vectors."""


def iou(x, y):
    """Generalized IoU: sum(min(x, y)) / sum(max(x, y)) for non-negative vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"iou operands differ in shape: {x.shape} vs {y.shape}")
    if (x < 0).any() or (y < 0).any():
        raise ValueError("iou needs non-negative vectors")
    den = np.maximum(x, y).sum()
    if den == 0.0:
        raise UndefinedInputError("iou of two all-zero vectors is undefined")
    return float(np.minimum(x, y).sum() / den)


@dataclass(frozen=True)
class MergeConfig:
    """Duplicate-entity merge settings.

    ``attribute_predicate`` is the predicate label of attribute triples
    (a lexeme id or string, matching the sample labels). When set, the
    object of such a triple is an attribute value and is only merged with
    other attribute values, never with entities. ``None`` merges every
    occurrence on IoU alone.
    """

    threshold: float = 0.8
    attribute_predicate: object = None

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"merge threshold {self.threshold} is outside [0, 1]")


@dataclass(frozen=True)
class Occurrence:
    label: object
    position: str
    alpha: np.ndarray = field(repr=False)
    triple_index: int
    score: float = 0.0
    kind: str = ENTITY_KIND


@dataclass(frozen=True)
class Node:
    id: int
    label: object
    members: tuple  # occurrence indices


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    predicate: object
    triple_index: int


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple
    edges: tuple
    dropped: tuple = ()  # indices of triples whose endpoints merged
    occurrences: tuple = field(default=(), repr=False)

    @property
    def diagnostics(self):
        return {
            "triples": len(self.edges) + len(self.dropped),
            "nodes": len(self.nodes),
            "edges": len(self.edges),
            "dropped_self_loops": len(self.dropped),
        }


def cluster_occurrences(occurrences, config=MergeConfig()):
    """Single-linkage clusters of occurrence indices.

    Two occurrences are linked when they are of the same kind and their IoU
    is strictly above the threshold. Clusters are returned ordered by their
    smallest member, members ascending.
    """
    occurrences = list(occurrences)
    if not occurrences:
        return []
    alphas = np.array([np.asarray(o.alpha, dtype=np.float64) for o in occurrences])
    if (alphas.sum(axis=1) == 0).any():
        raise UndefinedInputError("an occurrence has an all-zero attention vector")
    kinds = [o.kind for o in occurrences]
    groups = {}
    for kind in sorted(set(kinds)):
        idx = np.array([i for i, k in enumerate(kinds) if k == kind])
        roots = kernels.threshold_components(alphas[idx], config.threshold)
        for i, root in zip(idx, roots):
            groups.setdefault(int(idx[root]), []).append(int(i))
    return sorted(groups.values(), key=lambda g: g[0])


def resolve_label(members):
    """Majority label of ``(label, score)`` pairs.

    Ties go to the larger summed score, then to the smaller label.
    """
    members = list(members)
    if not members:
        raise ValueError("cannot label an empty cluster")
    counts = Counter(label for label, _ in members)
    totals = Counter()
    for label, score in members:
        totals[label] += 0.0 if score is None else float(score)
    return min(counts, key=lambda lab: (-counts[lab], -totals[lab], lab))


def occurrences_from_samples(samples, config=MergeConfig()):
    """Subject and object occurrences of each sample, two per triple in order."""
    occ = []
    size = None
    for k, s in enumerate(samples):
        att = np.asarray(s.attention, dtype=np.float64)
        if att.ndim != 2 or att.shape[0] != 3:
            raise ValueError(f"sample {k}: attention must be (3, L), got {att.shape}")
        if size is None:
            size = att.shape[1]
        elif att.shape[1] != size:
            raise ValueError(f"sample {k}: L={att.shape[1]} differs from L={size}")
        subj, pred, obj = s.triple
        score = 0.0 if s.score is None else float(s.score)
        obj_kind = ATTRIBUTE_KIND if (
            config.attribute_predicate is not None and pred == config.attribute_predicate
        ) else ENTITY_KIND
        occ.append(Occurrence(subj, SUBJECT, att[0], k, score, ENTITY_KIND))
        occ.append(Occurrence(obj, OBJECT, att[2], k, score, obj_kind))
    return occ


def build_graph(samples, config=MergeConfig()):
    """Scene graph from samples carrying ``triple``, ``attention`` (3, L) and ``score``."""
    samples = list(samples)
    occ = occurrences_from_samples(samples, config)
    clusters = cluster_occurrences(occ, config)
    node_of = np.empty(len(occ), dtype=np.int64)
    nodes = []
    for nid, members in enumerate(clusters):
        node_of[members] = nid
        label = resolve_label((occ[i].label, occ[i].score) for i in members)
        nodes.append(Node(nid, label, tuple(members)))
    edges, dropped = [], []
    for k, s in enumerate(samples):
        a, b = int(node_of[2 * k]), int(node_of[2 * k + 1])
        if a == b:
            dropped.append(k)
        else:
            edges.append(Edge(a, b, s.triple[1], k))
    return SceneGraph(tuple(nodes), tuple(edges), tuple(dropped), tuple(occ))


# --- export -----------------------------------------------------------------------


def _name(label, vocabulary):
    if vocabulary is not None and not isinstance(label, str):
        return vocabulary.lexeme(int(label))
    return str(label)


def _quote(text):
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def export_dot(graph, vocabulary=None, name="scene"):
    """Directed graph in DOT syntax; node ``n<k>`` is node id k."""
    lines = [f"digraph {name} {{"]
    for n in graph.nodes:
        lines.append(f"  n{n.id} [label={_quote(_name(n.label, vocabulary))}];")
    for e in graph.edges:
        lines.append(f"  n{e.source} -> n{e.target} [label={_quote(_name(e.predicate, vocabulary))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_summary(graph, vocabulary=None):
    """Line-oriented summary: ``node`` rows then ``edge`` rows, tab-separated."""
    out = [f"node\t{n.id}\t{_name(n.label, vocabulary)}\t{len(n.members)}\n" for n in graph.nodes]
    out += [
        f"edge\t{e.source}\t{_name(e.predicate, vocabulary)}\t{e.target}\n" for e in graph.edges
    ]
    return "".join(out)


def parse_summary(text):
    """Inverse of :func:`format_summary`; returns ``(nodes, edges)`` as plain tuples."""
    nodes, edges = [], []
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if parts[0] == "node" and len(parts) == 4:
            nodes.append((int(parts[1]), parts[2], int(parts[3])))
        elif parts[0] == "edge" and len(parts) == 4:
            edges.append((int(parts[1]), parts[2], int(parts[3])))
        else:
            raise ValueError(f"line {n}: not a node or edge record")
    return nodes, edges
