"""Slow, obviously-correct reference implementations used only by tests."""

from itertools import product


def cut_by_scan(rows, f):
    """Largest s per column with at least f+1 entries >= s, by scanning s upwards."""
    n_cols = len(rows[0]) if rows else 0
    out = []
    for j in range(n_cols):
        col = [row[j] for row in rows]
        best = 0
        for s in range(0, max(col) + 1):
            if sum(1 for v in col if v >= s) >= f + 1:
                best = s
        out.append(best)
    return out


def cut_by_rank(rows, f):
    """(f+1)-st largest value of each column."""
    return [sorted((row[j] for row in rows), reverse=True)[f] for j in range(len(rows[0]))]


def reachable(vertices, edges):
    """reach[u] = vertices reachable from u by a path of length >= 0 (path enumeration)."""
    succ = {v: [w for (u, w) in edges if u == v] for v in vertices}
    reach = {}
    for v in vertices:
        seen = {v}
        stack = [v]
        while stack:
            u = stack.pop()
            for w in succ[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        reach[v] = seen
    return reach


def scc_partition(vertices, edges):
    """Components as a set of frozensets: u ~ v iff each reaches the other."""
    reach = reachable(vertices, edges)
    return {frozenset(w for w in vertices if w in reach[v] and v in reach[w]) for v in vertices}


def topo_sortable(vertices, edges):
    indeg = {v: 0 for v in vertices}
    for _, v in edges:
        indeg[v] += 1
    ready = [v for v in vertices if indeg[v] == 0]
    done = 0
    while ready:
        u = ready.pop()
        done += 1
        for (a, b) in edges:
            if a == u:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
    return done == len(vertices)


def edge_rule_reference(before, after, n, f, kappa):
    """The threshold rule with the max taken explicitly over both candidates."""
    return before > after - f + kappa or (n - f - after) > after - f + kappa


def all_splits(others):
    """Every assignment of the listed processes to payload 0 or 1."""
    return [dict(zip(others, bits)) for bits in product((0, 1), repeat=len(others))]
