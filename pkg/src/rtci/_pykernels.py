"""Pure numpy/Python versions of the compiled kernels in ``_ckernels``.

Selected automatically when the extension is not built, or forced with
``RTCI_PURE_PYTHON=1``. Outputs match the compiled versions exactly.
"""

import math

import numpy as np


def bfs_truncated(indptr, indices, focal, max_hops):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int32)
    dist[focal] = 0
    frontier = np.array([focal], dtype=np.int64)
    level = 0
    while frontier.size and level < max_hops:
        starts = indptr[frontier]
        counts = indptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        # gather all neighbor slots of the frontier in one shot
        offsets = np.repeat(starts - np.cumsum(counts) + counts, counts)
        nbrs = indices[offsets + np.arange(total)]
        nbrs = np.unique(nbrs[dist[nbrs] < 0])
        level += 1
        dist[nbrs] = level
        frontier = nbrs.astype(np.int64)
    return dist


def neighbor_sum(indptr, indices, x):
    n = indptr.shape[0] - 1
    out = np.zeros((n, x.shape[1]), dtype=np.float64)
    deg = np.diff(indptr)
    rows = np.flatnonzero(deg > 0)
    k = 0
    # add the k-th neighbor of every row at once, keeping per-row summation order
    while rows.size:
        out[rows] += x[indices[indptr[rows] + k]]
        k += 1
        rows = rows[deg[rows] > k]
    return out


def _fen_add(tree, i, delta):
    size = len(tree) - 1
    i += 1
    while i <= size:
        tree[i] += delta
        i += i & (-i)


def _fen_find(tree, target, top):
    pos = 0
    step = top
    size = len(tree) - 1
    while step > 0:
        if pos + step <= size and tree[pos + step] <= target:
            pos += step
            target -= tree[pos]
        step >>= 1
    return pos


def ba_attach(n, m, power, uniforms):
    seed_n = m + 1
    edges = []
    for i in range(seed_n):
        for j in range(i + 1, seed_n):
            edges.append((i, j))
    deg = [0] * n
    weight = [0.0] * n
    tree = [0.0] * (n + 1)
    top = 1
    while top * 2 <= n:
        top *= 2
    total = 0.0
    for i in range(seed_n):
        deg[i] = m
    for i in range(seed_n):
        weight[i] = math.pow(float(deg[i]), power)
        _fen_add(tree, i, weight[i])
        total += weight[i]
    used = 0
    for u in range(seed_n, n):
        picked = []
        for _ in range(m):
            target = float(uniforms[used]) * total
            used += 1
            v = _fen_find(tree, target, top)
            if v >= u:
                v = u - 1
            if weight[v] == 0.0:
                j = v
                while j < u and weight[j] == 0.0:
                    j += 1
                if j == u:
                    j = v
                    while weight[j] == 0.0:
                        j -= 1
                v = j
            picked.append(v)
            _fen_add(tree, v, -weight[v])
            total -= weight[v]
            weight[v] = 0.0
        for v in picked:
            edges.append((v, u))
            deg[v] += 1
            wnew = math.pow(float(deg[v]), power)
            weight[v] = wnew
            _fen_add(tree, v, wnew)
            total += wnew
        deg[u] = m
        wnew = math.pow(float(m), power)
        weight[u] = wnew
        _fen_add(tree, u, wnew)
        total += wnew
    return np.array(edges, dtype=np.int64).reshape(-1, 2)
