"""Path computation over the controller's topology graph.

Graphs are adjacency dicts ``{node: iterable of neighbors}`` where an arc
u -> v means v can hear u, so a packet can be relayed from u to v.
"""

from __future__ import annotations

import math
from collections import deque


class NoRoute(LookupError):
    pass


def hop_distances(graph: dict, root, reverse: bool = False) -> dict:
    """BFS hop counts from ``root`` (or toward it when ``reverse``)."""
    if reverse:
        rg: dict = {}
        for u, vs in graph.items():
            for v in vs:
                rg.setdefault(v, set()).add(u)
        graph = rg
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in graph.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def shortest_path(graph: dict, src, dst) -> list:
    """Minimum-hop path; ties go to the lexicographically smallest id sequence."""
    if src == dst:
        return [src]
    to_dst = hop_distances(graph, dst, reverse=True)
    if src not in to_dst:
        raise NoRoute(f"no route from {src} to {dst}")
    path = [src]
    u = src
    while u != dst:
        want = to_dst[u] - 1
        u = min(v for v in graph.get(u, ()) if to_dst.get(v) == want)
        path.append(u)
    return path


def greedy_chain(graph: dict, coords: dict, src, dst) -> list:
    """Hop-by-hop greedy geographic path as the nodes themselves would build it.

    At a local minimum the rest of the path is completed with
    ``shortest_path`` from the stuck node.
    """
    target = coords[dst]
    path = [src]
    u = src
    while u != dst:
        here = math.dist(coords[u], target)
        best, best_d = None, here
        for v in sorted(graph.get(u, ())):
            if v not in coords:
                continue
            d = math.dist(coords[v], target)
            if d < best_d:
                best, best_d = v, d
        if best is None:
            return path[:-1] + shortest_path(graph, u, dst)
        path.append(best)
        u = best
    return path
