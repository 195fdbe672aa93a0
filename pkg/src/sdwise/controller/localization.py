"""RSSI ranging and multilateration by damped gradient descent."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

GD_ITERATIONS = 200


def rssi_to_distance(rssi_dbm: float, tx_power: float, pl0: float = 40.0, exponent: float = 2.0,
                     d0: float = 1.0) -> float:
    return d0 * 10 ** ((tx_power - pl0 - rssi_dbm) / (10 * exponent))


def _cost(x, refs, dists) -> float:
    r = np.hypot(refs[:, 0] - x[0], refs[:, 1] - x[1]) - dists
    return float(r @ r)


def linear_init(refs, dists):
    """Linearized least squares (subtract the first range equation); centroid if degenerate."""
    refs = np.asarray(refs, float)
    dists = np.asarray(dists, float)
    p0, d0 = refs[0], dists[0]
    a = 2 * (refs[1:] - p0)
    b = (d0 ** 2 - dists[1:] ** 2) + (refs[1:] ** 2).sum(axis=1) - (p0 ** 2).sum()
    if np.linalg.matrix_rank(a) < 2:
        return refs.mean(axis=0)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    return sol


def multilaterate(refs, dists, init=None, iterations: int = GD_ITERATIONS):
    """Minimize sum (|x - p_i| - d_i)^2 by gradient descent with step halving."""
    refs = np.asarray(refs, float)
    dists = np.asarray(dists, float)
    x = np.asarray(linear_init(refs, dists) if init is None else init, float)
    cost = _cost(x, refs, dists)
    step = 0.5
    for _ in range(iterations):
        diff = x - refs
        norm = np.hypot(diff[:, 0], diff[:, 1])
        norm[norm == 0] = 1e-12
        grad = 2 * (((norm - dists) / norm)[:, None] * diff).sum(axis=0)
        while step > 1e-12:
            trial = x - step * grad / len(refs)
            tc = _cost(trial, refs, dists)
            if tc <= cost:
                x, cost = trial, tc
                step *= 1.5
                break
            step /= 2
        else:
            break
    return (float(x[0]), float(x[1]))


def _collinear(points) -> bool:
    pts = np.asarray(points, float)
    return np.linalg.matrix_rank(pts[1:] - pts[0], tol=1e-6) < 2


def _sweep(adj, coords, pending) -> list:
    """Place every pending node with three non-collinear placed references; returns the rest."""
    progress = True
    while pending and progress:
        progress = False
        rest = []
        for v in pending:
            refs = [(coords[r], d) for r, d in sorted(adj[v].items()) if r in coords]
            if len(refs) >= 3 and not _collinear([p for p, _ in refs]):
                coords[v] = multilaterate([p for p, _ in refs], [d for _, d in refs])
                progress = True
            else:
                rest.append(v)
        pending = rest
    return pending


def mirror_candidates(p1, d1, p2, d2) -> list:
    """The two points at ranges d1, d2 from p1, p2 (closest approach when the circles miss)."""
    p1, p2 = np.asarray(p1, float), np.asarray(p2, float)
    base = p2 - p1
    dist = float(np.hypot(*base))
    if dist == 0:
        return []
    u = base / dist
    along = (d1 * d1 - d2 * d2 + dist * dist) / (2 * dist)
    h = math.sqrt(max(d1 * d1 - along * along, 0.0))
    mid = p1 + along * u
    perp = np.array([-u[1], u[0]])
    return [tuple(map(float, mid + h * perp)), tuple(map(float, mid - h * perp))]


def _residual(adj, coords) -> float:
    errs = [(math.dist(coords[a], coords[b]) - d) ** 2
            for a, nbrs in adj.items() if a in coords for b, d in nbrs.items() if b in coords and a < b]
    return sum(errs) / len(errs) if errs else 0.0


MIRROR_MARGIN = 4.0  # the rejected mirror must fit this many times worse


def _branch(adj, coords, pending, depth):
    """Resolve a stalled sweep by trying both mirror positions of a two-reference node.

    A branch is kept only when it places further nodes and the extra
    ranges make the other mirror fit clearly worse; otherwise nothing
    changes and the node stays flagged.
    """
    pending = _sweep(adj, coords, pending)
    if not pending or depth == 0:
        return coords, pending
    for v in pending:
        refs = sorted((r for r in adj[v] if r in coords), key=lambda r: (-adj[v][r], r))
        if len(refs) < 2:
            continue
        r1 = refs[0]
        r2 = max(refs[1:], key=lambda r: (math.dist(coords[r1], coords[r]), -r))
        cands = mirror_candidates(coords[r1], adj[v][r1], coords[r2], adj[v][r2])
        if len(cands) < 2 or math.dist(*cands) < 1e-6:
            continue
        options = []
        for c in cands:
            trial = dict(coords)
            trial[v] = c
            placed, left = _branch(adj, trial, [u for u in pending if u != v], depth - 1)
            options.append((len(left), _residual(adj, placed), placed, left))
        options.sort(key=lambda o: (o[0], o[1]))
        best, other = options
        if best[0] < len(pending) - 1 and best[0] <= other[0] and other[1] > MIRROR_MARGIN * best[1] + 1e-12:
            return best[2], best[3]
    return coords, pending


def rssi_localize(ranges: dict, anchors: dict, previous: dict | None = None):
    """Position every node reachable from the anchors.

    ``ranges`` maps unordered pairs ``frozenset({a, b})`` to estimated
    distances.  Nodes are visited breadth-first from the anchors and each
    is solved against its already-positioned references.  When that
    stalls, a node with two references is tried at both mirror positions
    (see ``_branch``).  Returns ``(coords, flagged)``; flagged nodes could
    not be placed and keep their ``previous`` estimate when one exists.
    """
    previous = previous or {}
    adj: dict = {}
    for pair, d in ranges.items():
        a, b = tuple(pair)
        adj.setdefault(a, {})[b] = d
        adj.setdefault(b, {})[a] = d
    coords = {a: (float(p[0]), float(p[1])) for a, p in anchors.items()}
    order = []
    seen = set(coords)
    queue = deque(sorted(coords))
    while queue:
        u = queue.popleft()
        for v in sorted(adj.get(u, {})):
            if v not in seen:
                seen.add(v)
                order.append(v)
                queue.append(v)
    coords, pending = _branch(adj, coords, order, depth=2)
    flagged = set(pending) | (set(adj) - seen)
    for v in flagged:
        if v in previous:
            coords[v] = previous[v]
    return coords, flagged


def position_error(estimates: dict, truth: dict) -> dict:
    return {n: math.dist(estimates[n], truth[n]) for n in estimates if n in truth}
