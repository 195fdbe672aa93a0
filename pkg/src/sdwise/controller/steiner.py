"""Euclidean Steiner tree heuristic: MST plus Fermat-point insertions."""

from __future__ import annotations

import math
from dataclasses import dataclass

EPS = 1e-6
_TWO_THIRDS_PI = 2 * math.pi / 3


@dataclass
class SteinerTree:
    vertices: list  # terminal coordinates first, then Steiner points
    edges: list  # (i, j) index pairs into ``vertices``
    length: float
    n_terminals: int

    @property
    def steiner_points(self) -> list:
        return self.vertices[self.n_terminals:]

    def adjacency(self) -> dict:
        adj = {i: set() for i in range(len(self.vertices))}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj


def _angle(at, p, q) -> float:
    ax, ay = p[0] - at[0], p[1] - at[1]
    bx, by = q[0] - at[0], q[1] - at[1]
    na, nb = math.hypot(ax, ay), math.hypot(bx, by)
    if na == 0 or nb == 0:
        return 0.0
    c = max(-1.0, min(1.0, (ax * bx + ay * by) / (na * nb)))
    return math.acos(c)


def fermat_point(a, b, c) -> tuple:
    """Point minimizing the summed distance to three points."""
    angles = (_angle(a, b, c), _angle(b, a, c), _angle(c, a, b))
    for vertex, ang in zip((a, b, c), angles):
        if ang >= _TWO_THIRDS_PI - 1e-12:
            return (float(vertex[0]), float(vertex[1]))
    la, lb, lc = math.dist(b, c), math.dist(a, c), math.dist(a, b)
    if la == 0 or lb == 0 or lc == 0:
        return (float(a[0]), float(a[1])) if lb == 0 or lc == 0 else (float(b[0]), float(b[1]))
    # barycentric weights side * csc(angle + 60 deg)
    wa = la / math.sin(angles[0] + math.pi / 3)
    wb = lb / math.sin(angles[1] + math.pi / 3)
    wc = lc / math.sin(angles[2] + math.pi / 3)
    s = wa + wb + wc
    return ((wa * a[0] + wb * b[0] + wc * c[0]) / s, (wa * a[1] + wb * b[1] + wc * c[1]) / s)


def mst_edges(points) -> list:
    """Prim's algorithm on the complete Euclidean graph; ties go to lower index."""
    n = len(points)
    if n < 2:
        return []
    inside = [False] * n
    best = [math.inf] * n
    parent = [-1] * n
    best[0] = 0.0
    edges = []
    for _ in range(n):
        u = min((i for i in range(n) if not inside[i]), key=lambda i: (best[i], i))
        inside[u] = True
        if parent[u] >= 0:
            edges.append((parent[u], u))
        for v in range(n):
            if not inside[v]:
                d = math.dist(points[u], points[v])
                if d < best[v]:
                    best[v], parent[v] = d, u
    return edges


def mst_length(points) -> float:
    pts = _dedupe(points)
    return sum(math.dist(pts[i], pts[j]) for i, j in mst_edges(pts))


def _dedupe(points) -> list:
    seen, out = set(), []
    for p in points:
        key = (float(p[0]), float(p[1]))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


class _Tree:
    def __init__(self, points, n_terminals):
        self.pts = list(points)
        self.n = n_terminals
        self.adj = {i: set() for i in range(len(points))}

    def link(self, i, j):
        self.adj[i].add(j)
        self.adj[j].add(i)

    def unlink(self, i, j):
        self.adj[i].discard(j)
        self.adj[j].discard(i)

    def add_point(self, p) -> int:
        self.pts.append(p)
        k = len(self.pts) - 1
        self.adj[k] = set()
        return k

    def length(self) -> float:
        return sum(math.dist(self.pts[i], self.pts[j]) for i in self.adj for j in self.adj[i] if i < j)

    def d(self, i, j) -> float:
        return math.dist(self.pts[i], self.pts[j])


def _best_insertion(t: _Tree):
    best = None
    for v in sorted(t.adj):
        nbrs = sorted(t.adj[v])
        for x in range(len(nbrs)):
            for y in range(x + 1, len(nbrs)):
                a, b = nbrs[x], nbrs[y]
                if _angle(t.pts[v], t.pts[a], t.pts[b]) >= _TWO_THIRDS_PI:
                    continue
                s = fermat_point(t.pts[v], t.pts[a], t.pts[b])
                gain = t.d(v, a) + t.d(v, b) - sum(math.dist(s, t.pts[k]) for k in (v, a, b))
                if best is None or gain > best[0]:
                    best = (gain, v, a, b, s)
    return best


def _relax(t: _Tree):
    """Move degree-3 Steiner points to their neighbors' Fermat point; prune degree <= 2."""
    for _ in range(100):
        moved = 0.0
        for s in range(t.n, len(t.pts)):
            nb = sorted(t.adj[s])
            if len(nb) == 3:
                p = fermat_point(*(t.pts[k] for k in nb))
                before = sum(t.d(s, k) for k in nb)
                after = sum(math.dist(p, t.pts[k]) for k in nb)
                if after < before:
                    moved = max(moved, before - after)
                    t.pts[s] = p
        for s in range(t.n, len(t.pts)):
            nb = sorted(t.adj[s])
            if 0 < len(nb) <= 2 or (len(nb) == 3 and min(t.d(s, k) for k in nb) < 1e-9):
                for k in nb:
                    t.unlink(s, k)
                if len(nb) == 2:
                    t.link(nb[0], nb[1])
                elif len(nb) == 3:
                    keep = min(nb, key=lambda k: (t.d(s, k), k))
                    for k in nb:
                        if k != keep:
                            t.link(keep, k)
        if moved <= 1e-12:
            break


def _compact(t: _Tree) -> SteinerTree:
    live = list(range(t.n)) + [s for s in range(t.n, len(t.pts)) if t.adj[s]]
    index = {old: new for new, old in enumerate(live)}
    vertices = [t.pts[i] for i in live]
    edges = sorted((index[i], index[j]) for i in live for j in t.adj[i] if i < j)
    return SteinerTree(vertices, edges, t.length(), t.n)


def steiner_tree(terminals) -> SteinerTree:
    pts = _dedupe(terminals)
    if len(pts) < 2:
        raise ValueError("a Steiner tree needs at least two distinct terminals")
    t = _Tree(pts, len(pts))
    for i, j in mst_edges(pts):
        t.link(i, j)
    length = t.length()
    while True:
        cand = _best_insertion(t)
        if cand is None or cand[0] <= EPS:
            break
        _, v, a, b, s = cand
        k = t.add_point(s)
        t.unlink(v, a)
        t.unlink(v, b)
        for x in (v, a, b):
            t.link(k, x)
        _relax(t)
        new = t.length()
        if length - new <= EPS:
            break
        length = new
    return _compact(t)


def nearest_node(point, coords: dict):
    """Node id closest to ``point``; equal distances go to the lowest id."""
    if not coords:
        raise ValueError("empty topology")
    return min(coords, key=lambda n: (math.dist(point, coords[n]), n))
