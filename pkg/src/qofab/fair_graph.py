"""Ordering phase of a round: from log prefixes to fair delivery batches.

Pipeline::

    build_order_stats -> build_edges -> condense -> emit_deliveries

Messages are identified by digest.  A condensed vertex is either a digest
(``bytes``) or a ``frozenset`` of condensed vertices.  Every threshold
comparison is done on integers (``2*C >= n+f-kappa``), never on floats.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Set, Tuple, Union

log = logging.getLogger(__name__)

CondensedVertex = Union[bytes, FrozenSet["CondensedVertex"]]


@dataclass(frozen=True)
class OrderStats:
    """Candidate set ``V``, sparse pairwise before-counts ``M`` and appearance counts ``C``."""

    V: Tuple[bytes, ...]
    M: Mapping[Tuple[bytes, bytes], int]
    C: Mapping[bytes, int]

    def before(self, m: bytes, m2: bytes) -> int:
        return self.M.get((m, m2), 0)

    def matrix(self, order: Sequence[bytes]) -> List[List[int]]:
        """Dense ``M`` restricted to ``order`` (row = earlier message)."""
        return [[self.before(a, b) for b in order] for a in order]


@dataclass(frozen=True)
class DependencyGraph:
    vertices: Tuple[bytes, ...]
    edges: FrozenSet[Tuple[bytes, bytes]]


@dataclass(frozen=True)
class CondensedDag:
    vertices: Tuple[CondensedVertex, ...]
    edges: FrozenSet[Tuple[CondensedVertex, CondensedVertex]]


def build_order_stats(logs: Sequence[Sequence[bytes]], cut: Sequence[int],
                      delivered: Iterable[bytes], n: int, f: int) -> OrderStats:
    """Count, over every log prefix ``logs[j][:cut[j]]``, which undelivered
    message precedes which, and in how many prefixes each message appears.

    A message repeated inside one log counts at its first position.
    """
    if len(logs) != n or len(cut) != n:
        raise ValueError("need one log and one cut entry per process")
    done = set(delivered)
    M: Dict[Tuple[bytes, bytes], int] = {}
    C: Dict[bytes, int] = {}
    for j, entries in enumerate(logs):
        if len(entries) < cut[j]:
            raise ValueError(f"log of p{j + 1} is shorter than its cut {cut[j]}")
        order: List[bytes] = []
        seen: Set[bytes] = set()
        for m in entries[:cut[j]]:
            if m in done or m in seen:
                continue
            seen.add(m)
            order.append(m)
        for i, m in enumerate(order):
            C[m] = C.get(m, 0) + 1
            for later in order[i + 1:]:
                key = (m, later)
                M[key] = M.get(key, 0) + 1
    return OrderStats(tuple(sorted(C)), M, C)


def edge_rule(before: int, after: int, n: int, f: int, kappa: int) -> bool:
    """Edge ``(m, m')`` with ``before = M[m][m']`` and ``after = M[m'][m]``."""
    return max(before, n - f - after) > after - f + kappa


def build_edges(stats: OrderStats, n: int, f: int, kappa: int) -> DependencyGraph:
    if kappa < 0 or n <= 3 * f:
        raise ValueError("need kappa >= 0 and n > 3f")
    edges = set()
    V = stats.V
    for a in V:
        for b in V:
            if a != b and edge_rule(stats.before(a, b), stats.before(b, a), n, f, kappa):
                edges.add((a, b))
    return DependencyGraph(V, frozenset(edges))


def flatten(w: CondensedVertex) -> FrozenSet[bytes]:
    if isinstance(w, bytes):
        return frozenset((w,))
    out: Set[bytes] = set()
    for member in w:
        out |= flatten(member)
    return frozenset(out)


def sort_key(w: CondensedVertex) -> bytes:
    """Smallest digest inside ``w``; unique because vertices are disjoint."""
    return min(flatten(w))


def strongly_connected_components(vertices: Sequence, successors: Mapping) -> List[List]:
    """Tarjan's algorithm with an explicit stack.

    Components come out in reverse topological order of the condensation.
    """
    index: Dict = {}
    low: Dict = {}
    on_stack: Set = set()
    stack: List = []
    sccs: List[List] = []
    counter = 0
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(successors.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(successors.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                sccs.append(comp)
    return sccs


def _successors(vertices: Sequence, edges: Iterable[Tuple]) -> Dict:
    succ: Dict = {v: [] for v in vertices}
    for u, v in edges:
        succ[u].append(v)
    for v in succ:
        succ[v].sort(key=sort_key)
    return succ


def condense(g: DependencyGraph) -> CondensedDag:
    """Collapse strongly connected components until the graph is acyclic."""
    W: List[CondensedVertex] = sorted(g.vertices)
    F = {(u, v) for u, v in g.edges if u != v}
    while True:
        sccs = strongly_connected_components(W, _successors(W, F))
        if all(len(c) == 1 for c in sccs):
            break
        owner: Dict = {}
        merged: List[CondensedVertex] = []
        for comp in sccs:
            node = comp[0] if len(comp) == 1 else frozenset(comp)
            merged.append(node)
            for v in comp:
                owner[v] = node
        W = sorted(merged, key=sort_key)
        F = {(owner[u], owner[v]) for u, v in F if owner[u] != owner[v]}
    return CondensedDag(tuple(W), frozenset(F))


def _meets_threshold(count: int, n: int, f: int, kappa: int) -> bool:
    return 2 * count >= n + f - kappa


def stable(w: CondensedVertex, C: Mapping[bytes, int], n: int, f: int, kappa: int) -> bool:
    """A message is stable once ``C[m] >= (n+f-kappa)/2``; a collapsed set is
    stable when all of its members are."""
    if isinstance(w, bytes):
        return _meets_threshold(C[w], n, f, kappa)
    return all(stable(member, C, n, f, kappa) for member in w)


def stable_as_written(w: CondensedVertex, C: Mapping[bytes, int], n: int, f: int,
                      kappa: int) -> bool:
    """The recursion that only descends into nested sets and ignores the
    messages directly inside a set.  Used for diagnostics only."""
    if isinstance(w, bytes):
        return _meets_threshold(C[w], n, f, kappa)
    return all(stable_as_written(m, C, n, f, kappa) for m in w if not isinstance(m, bytes))


def emit_deliveries(dag: CondensedDag, C: Mapping[bytes, int], n: int, f: int,
                    kappa: int) -> List[FrozenSet[bytes]]:
    """Repeatedly deliver the sort-minimal source vertex that is stable.

    Vertices left over (unstable, or behind an unstable one) are not emitted.
    """
    indeg = {w: 0 for w in dag.vertices}
    succ = _successors(dag.vertices, dag.edges)
    for _, v in dag.edges:
        indeg[v] += 1
    remaining = set(dag.vertices)
    batches: List[FrozenSet[bytes]] = []
    while True:
        ready = [w for w in remaining if indeg[w] == 0 and stable(w, C, n, f, kappa)]
        if not ready:
            break
        w = min(ready, key=sort_key)
        batches.append(flatten(w))
        remaining.discard(w)
        for v in succ[w]:
            indeg[v] -= 1
    for w in remaining:
        if not isinstance(w, bytes) and stable_as_written(w, C, n, f, kappa) \
                and not stable(w, C, n, f, kappa):
            log.debug("collapsed set of %d messages held back: a member is below threshold",
                      len(flatten(w)))
    return batches


def order_round(logs: Sequence[Sequence[bytes]], cut: Sequence[int], delivered: Iterable[bytes],
                n: int, f: int, kappa: int):
    """Run the whole pipeline; returns ``(stats, graph, dag, batches)``."""
    stats = build_order_stats(logs, cut, delivered, n, f)
    graph = build_edges(stats, n, f, kappa)
    dag = condense(graph)
    return stats, graph, dag, emit_deliveries(dag, stats.C, n, f, kappa)
