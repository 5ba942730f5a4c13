"""Goal-model graph algebra.

Cycle detection, transitive closure, complete-graph pair accounting,
cross-model symmetry detection, balanced edge sampling, and DOT export.
All functions treat graphs as immutable values; iteration is always over
sorted collections so outputs never depend on hash order.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from itertools import combinations

from .errors import CyclicGraphError

_GOAL_ID_RE = re.compile(r"g(\d+)\Z")


def goal_id_key(node_id: str) -> tuple:
    """Sort key ordering gN ids numerically and other ids lexically after."""
    m = _GOAL_ID_RE.match(node_id)
    if m:
        return (0, int(m.group(1)), "")
    return (1, 0, node_id)


@dataclass(frozen=True)
class GoalNode:
    text: str
    implied: bool = False


@dataclass
class GoalGraph:
    """Directed refinement graph: an edge (p, c) reads "p is refined by c"."""

    nodes: dict[str, GoalNode]
    edges: set[tuple[str, str]]
    model_index: int = 0

    def __post_init__(self):
        for parent, child in self.edges:
            for endpoint in (parent, child):
                if endpoint not in self.nodes:
                    raise ValueError(f"edge endpoint {endpoint!r} is not a node")

    def sorted_nodes(self) -> list[str]:
        return sorted(self.nodes, key=goal_id_key)

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(self.edges, key=lambda e: (goal_id_key(e[0]), goal_id_key(e[1])))


@dataclass(frozen=True)
class EdgeSample:
    """Balanced, seed-shuffled draw of declared and undeclared goal pairs."""

    pairs: tuple[tuple[str, str, bool], ...]
    seed: int


@dataclass(frozen=True)
class SymmetricRelation:
    """A goal pair related in opposite directions by the listed models."""

    pair: tuple[str, str]
    forward_models: tuple[int, ...]
    reverse_models: tuple[int, ...]


def _adjacency(g: GoalGraph) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {n: [] for n in g.sorted_nodes()}
    for parent, child in g.sorted_edges():
        adj[parent].append(child)
    return adj


def find_cycle(g: GoalGraph) -> list[str] | None:
    """Return one witness cycle as a node sequence [a, ..., a], or None.

    A self-loop yields [a, a].  Detection is a depth-first search over
    sorted adjacency, so the witness is deterministic.
    """
    adj = _adjacency(g)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = dict.fromkeys(adj, WHITE)
    for root in adj:
        if color[root] != WHITE:
            continue
        stack = [(root, iter(adj[root]))]
        path = [root]
        color[root] = GRAY
        while stack:
            node, children = stack[-1]
            advanced = False
            for child in children:
                if color[child] == GRAY:
                    return path[path.index(child) :] + [child]
                if color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, iter(adj[child])))
                    path.append(child)
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
                path.pop()
    return None


def ensure_acyclic(g: GoalGraph) -> None:
    cycle = find_cycle(g)
    if cycle is not None:
        raise CyclicGraphError(cycle)


def closure(g: GoalGraph) -> set[tuple[str, str]]:
    """Transitive closure T(e): (a, c) iff a directed path a -> ... -> c exists.

    Rejects cyclic input.  The result contains every declared edge and is
    idempotent under re-application.
    """
    ensure_acyclic(g)
    adj = _adjacency(g)
    descendants: dict[str, set[str]] = {}

    def collect(node: str) -> set[str]:
        if node in descendants:
            return descendants[node]
        reach: set[str] = set()
        for child in adj[node]:
            reach.add(child)
            reach |= collect(child)
        descendants[node] = reach
        return reach

    # Sorted post-order walk; recursion depth is bounded by the longest path.
    for node in sorted(adj, key=goal_id_key):
        collect(node)
    return {(a, c) for a, reach in descendants.items() for c in reach}


def pair_count(n: int) -> int:
    """Number of unordered goal pairs among n goals: n(n-1)/2."""
    if n < 0:
        raise ValueError(f"node count must be >= 0, got {n}")
    return n * (n - 1) // 2


def _canonical_pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if goal_id_key(a) <= goal_id_key(b) else (b, a)


def undeclared(g: GoalGraph) -> set[tuple[str, str]]:
    """Unordered node pairs with no closure edge in either direction.

    For a valid graph |undeclared| + |closure| = n(n-1)/2, because a DAG's
    closure relates each pair in at most one direction.
    """
    covered = {_canonical_pair(a, b) for a, b in closure(g)}
    all_pairs = {
        _canonical_pair(a, b) for a, b in combinations(g.sorted_nodes(), 2)
    }
    return all_pairs - covered


def sample_edges(graphs: list[GoalGraph], k: int, seed: int) -> EdgeSample:
    """Draw k declared and k undeclared pairs, pooled across graphs, shuffled.

    Declared pairs come from the union of the graphs' transitive closures;
    undeclared pairs from the union of their undeclared sets.  Draws are
    uniform without replacement; the combined order is a seeded shuffle.
    """
    if k < 1:
        raise ValueError(f"per-class sample count must be >= 1, got {k}")
    declared_pool: set[tuple[str, str]] = set()
    undeclared_pool: set[tuple[str, str]] = set()
    for g in graphs:
        declared_pool |= closure(g)
        undeclared_pool |= undeclared(g)
    if len(declared_pool) < k:
        raise ValueError(
            f"declared pool has {len(declared_pool)} pairs, cannot draw {k}"
        )
    if len(undeclared_pool) < k:
        raise ValueError(
            f"undeclared pool has {len(undeclared_pool)} pairs, cannot draw {k}"
        )
    rng = random.Random(seed)
    key = lambda pair: (goal_id_key(pair[0]), goal_id_key(pair[1]))
    picked = [(p, c, True) for p, c in rng.sample(sorted(declared_pool, key=key), k)]
    picked += [(a, b, False) for a, b in rng.sample(sorted(undeclared_pool, key=key), k)]
    rng.shuffle(picked)
    return EdgeSample(pairs=tuple(picked), seed=seed)


def _symmetry_key(g: GoalGraph, node_id: str) -> str:
    # Implied goals get fresh ids in every generation, so across models they
    # are identified by exact text instead of id.
    node = g.nodes[node_id]
    return f"implied:{node.text}" if node.implied else node_id


def symmetric_relations(graphs: list[GoalGraph]) -> list[SymmetricRelation]:
    """Find goal pairs declared in opposite directions across (or within) models.

    Works on declared edges, not closures.  Returns one record per unordered
    pair with the contributing model indices for each direction, sorted
    canonically; the result does not depend on the input list order.
    """
    directed: dict[tuple[str, str], set[int]] = {}
    for g in graphs:
        for parent, child in g.sorted_edges():
            key = (_symmetry_key(g, parent), _symmetry_key(g, child))
            directed.setdefault(key, set()).add(g.model_index)
    results = []
    for (a, b), forward in sorted(directed.items()):
        if (b, a) not in directed:
            continue
        if (a, b) != _canonical_pair(a, b):
            continue  # report each unordered pair once
        results.append(
            SymmetricRelation(
                pair=(a, b),
                forward_models=tuple(sorted(forward)),
                reverse_models=tuple(sorted(directed[(b, a)])),
            )
        )
    return results


def unify_implied_ids(graphs: list[GoalGraph]) -> list[GoalGraph]:
    """Rename implied-goal ids so graphs share one id space for pooled analysis.

    Explicit ids are stable per transcript; implied ids are generation-local.
    Implied goals with identical text receive one shared id drawn past the
    highest id seen anywhere; processing order is by model index.
    """
    max_num = -1
    for g in graphs:
        for node_id in g.nodes:
            m = _GOAL_ID_RE.match(node_id)
            if m:
                max_num = max(max_num, int(m.group(1)))
    assigned: dict[str, str] = {}
    out = []
    for g in sorted(graphs, key=lambda g: g.model_index):
        rename: dict[str, str] = {}
        for node_id in g.sorted_nodes():
            node = g.nodes[node_id]
            if not node.implied:
                continue
            if node.text not in assigned:
                max_num += 1
                assigned[node.text] = f"g{max_num}"
            rename[node_id] = assigned[node.text]
        out.append(
            GoalGraph(
                nodes={rename.get(n, n): node for n, node in g.nodes.items()},
                edges={(rename.get(p, p), rename.get(c, c)) for p, c in g.edges},
                model_index=g.model_index,
            )
        )
    return out


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(g: GoalGraph, name: str = "goal_model") -> str:
    """Serialize a graph to DOT, implied goals styled dashed."""
    lines = [f"digraph {name} {{"]
    for node_id in g.sorted_nodes():
        node = g.nodes[node_id]
        attrs = [f"label={_dot_quote(f'{node_id}: {node.text}')}"]
        if node.implied:
            attrs.append("style=dashed")
        lines.append(f"  {_dot_quote(node_id)} [{', '.join(attrs)}];")
    for parent, child in g.sorted_edges():
        lines.append(f"  {_dot_quote(parent)} -> {_dot_quote(child)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(g: GoalGraph) -> dict:
    return {
        "nodes": [
            {"id": n, "text": g.nodes[n].text, "implied": g.nodes[n].implied}
            for n in g.sorted_nodes()
        ],
        "edges": [[p, c] for p, c in g.sorted_edges()],
        "model_index": g.model_index,
    }


def graph_from_dict(data: dict) -> GoalGraph:
    nodes = {
        entry["id"]: GoalNode(text=entry["text"], implied=bool(entry.get("implied", False)))
        for entry in data["nodes"]
    }
    edges = {(p, c) for p, c in data["edges"]}
    return GoalGraph(nodes=nodes, edges=edges, model_index=int(data.get("model_index", 0)))
