"""Independent brute-force references used by the tests.

Nothing here imports the package's engines; each oracle is a direct,
slow restatement of the defining formula.
"""
from __future__ import annotations

import math

import numpy as np

NEIGHBORS_4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
NEIGHBORS_8 = NEIGHBORS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _inside(mask, p):
    return 0 <= p[0] < mask.shape[0] and 0 <= p[1] < mask.shape[1] and bool(mask[p])


def enumerate_vertex_paths(weights, mask, sources, targets, upper=math.inf):
    """Minimum over all simple 4-neighbor paths of the summed vertex weights.

    Exhaustive depth-first enumeration; a partial path is abandoned once its
    cost exceeds the best complete cost found so far, or ``upper`` (weights
    are positive, so no extension can improve on it).  With a finite
    ``upper`` the result is the true minimum if that is at most ``upper``,
    and infinite otherwise.
    """
    sources = [tuple(s) for s in sources]
    targets = {tuple(t) for t in targets}
    if targets & set(sources):
        return 0.0
    best = math.inf
    limit = upper
    on_path = set()

    def dfs(p, cost):
        nonlocal best, limit
        if cost > limit:
            return
        if p in targets:
            best = limit = cost
            return
        on_path.add(p)
        for dx, dy in NEIGHBORS_4:
            q = (p[0] + dx, p[1] + dy)
            if q not in on_path and _inside(mask, q):
                dfs(q, cost + weights[q])
        on_path.discard(p)

    for s in sources:
        if _inside(mask, s):
            dfs(s, weights[s])
    return best


def enumerate_edge_paths(speed, mask, source, target, step=1.0, upper=math.inf):
    """Minimum over all simple 8-neighbor paths of trapezoid edge costs (see above for ``upper``)."""
    source, target = tuple(source), tuple(target)
    if source == target:
        return 0.0
    best = math.inf
    limit = upper
    on_path = set()

    def dfs(p, cost):
        nonlocal best, limit
        if cost > limit:
            return
        if p == target:
            best = limit = cost
            return
        on_path.add(p)
        for dx, dy in NEIGHBORS_8:
            q = (p[0] + dx, p[1] + dy)
            if q not in on_path and _inside(mask, q):
                length = math.hypot(dx, dy) * step
                dfs(q, cost + length * 0.5 * (speed[p] + speed[q]))
        on_path.discard(p)

    dfs(source, 0.0)
    return best


def bellman_ford_vertex(weights, mask, sources):
    """Vertex-sum distances from a source set by relaxing every edge to a fixpoint."""
    dist = np.full(weights.shape, np.inf)
    for s in sources:
        if mask[tuple(s)]:
            dist[tuple(s)] = weights[tuple(s)]
    points = list(zip(*np.nonzero(mask)))
    for _ in range(len(points) + 1):
        changed = False
        for p in points:
            for dx, dy in NEIGHBORS_4:
                q = (p[0] + dx, p[1] + dy)
                if _inside(mask, q) and dist[p] + weights[q] < dist[q]:
                    dist[q] = dist[p] + weights[q]
                    changed = True
        if not changed:
            break
    return dist


def bellman_ford_edge(speed, mask, source, step=1.0):
    """Trapezoid-cost distances on the 8-neighbor lattice by fixpoint relaxation."""
    dist = np.full(speed.shape, np.inf)
    dist[tuple(source)] = 0.0
    points = list(zip(*np.nonzero(mask)))
    for _ in range(len(points) + 1):
        changed = False
        for p in points:
            if not np.isfinite(dist[p]):
                continue
            for dx, dy in NEIGHBORS_8:
                q = (p[0] + dx, p[1] + dy)
                if not _inside(mask, q):
                    continue
                nd = dist[p] + math.hypot(dx, dy) * step * 0.5 * (speed[p] + speed[q])
                if nd < dist[q]:
                    dist[q] = nd
                    changed = True
        if not changed:
            break
    return dist


def hat(dx, dy):
    """Coarse hat function of the triangulation cut along the (1, -1) diagonals.

    Its support is the hexagon with corners at the six triangulation
    neighbors, so it decays linearly in the norm max(|dx|, |dy|, |dx + dy|).
    """
    return max(0.0, 1.0 - max(abs(dx), abs(dy), abs(dx + dy)))


def dense_hat_matrix(n, m):
    """Interior-fine by interior-coarse matrix of hat values, built pointwise."""
    N = n * m
    fine = [(i, j) for i in range(1, N) for j in range(1, N)]
    coarse = [(a, b) for a in range(1, n) for b in range(1, n)]
    out = np.zeros((len(fine), len(coarse)))
    for r, (i, j) in enumerate(fine):
        for c, (a, b) in enumerate(coarse):
            out[r, c] = hat(i / m - a, j / m - b)
    return out


def dense_laplacian(N):
    """Graph Laplacian ``4I - A`` of the interior of {0..N}^2, assembled by loops."""
    pts = [(i, j) for i in range(1, N) for j in range(1, N)]
    index = {p: k for k, p in enumerate(pts)}
    L = np.zeros((len(pts), len(pts)))
    for p, k in index.items():
        L[k, k] = 4.0
        for dx, dy in NEIGHBORS_4:
            q = (p[0] + dx, p[1] + dy)
            if q in index:
                L[k, index[q]] = -1.0
    return L


def normal_equations_projection(fine_values, n, m):
    """Energy-minimizing coarse coefficients via explicit dense normal equations."""
    N = n * m
    Phi = dense_hat_matrix(n, m)
    L = dense_laplacian(N)
    f = np.asarray(fine_values)[1:N, 1:N].ravel()
    coeffs = np.linalg.solve(Phi.T @ L @ Phi, Phi.T @ L @ f)
    out = np.zeros((n + 1, n + 1))
    out[1:n, 1:n] = coeffs.reshape(n - 1, n - 1)
    return out


def bilinear_at(fine, x, y):
    """Bilinear interpolation of a lattice array at one real point."""
    i, j = int(math.floor(x)), int(math.floor(y))
    i = min(i, fine.shape[0] - 2)
    j = min(j, fine.shape[1] - 2)
    fx, fy = x - i, y - j
    return ((1 - fx) * (1 - fy) * fine[i, j] + fx * (1 - fy) * fine[i + 1, j]
            + (1 - fx) * fy * fine[i, j + 1] + fx * fy * fine[i + 1, j + 1])


def circle_quadrature(fine, cx, cy, radius, points=10_000):
    """Mean of the bilinear interpolant over an equally spaced circle."""
    theta = 2 * math.pi * (np.arange(points) + 0.5) / points
    vals = [bilinear_at(fine, cx + radius * math.cos(t), cy + radius * math.sin(t)) for t in theta]
    return float(np.mean(vals))


def hop_distance_bfs(allowed, sources, targets):
    """Fewest vertices on a 4-neighbor path inside ``allowed``; 0 if none."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import shortest_path

    idx = np.arange(allowed.size).reshape(allowed.shape)
    rows, cols = [], []
    for a, b in ((idx[:-1, :], idx[1:, :]), (idx[:, :-1], idx[:, 1:])):
        ok = allowed.ravel()[a] & allowed.ravel()[b]
        rows.append(a[ok])
        cols.append(b[ok])
    # one extra node joined to every source; its hop distance counts vertices
    src = [idx[p] for p in sources if allowed[p]]
    if not src:
        return 0
    root = allowed.size
    rows.append(np.full(len(src), root))
    cols.append(np.array(src))
    r, c = np.concatenate(rows), np.concatenate(cols)
    adj = coo_matrix((np.ones(r.size), (r, c)), shape=(root + 1, root + 1)).tocsr()
    d = shortest_path(adj, unweighted=True, directed=False, indices=root)
    best = min(d[idx[t]] for t in targets)
    return 0 if not np.isfinite(best) else int(best)
