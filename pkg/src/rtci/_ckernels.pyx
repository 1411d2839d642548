# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Every function here has a numpy twin in ``_pykernels``
with the same signature and bit-identical output."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


def bfs_truncated(const cnp.int64_t[::1] indptr, const cnp.int32_t[::1] indices,
                  Py_ssize_t focal, Py_ssize_t max_hops):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full(n, -1, dtype=np.int32)
    cdef cnp.int32_t[::1] dist = dist_arr
    cdef cnp.int32_t[::1] queue = np.empty(n, dtype=np.int32)
    cdef Py_ssize_t head = 0, tail = 0, u, k
    cdef cnp.int32_t v, du
    dist[focal] = 0
    queue[tail] = <cnp.int32_t>focal
    tail += 1
    with nogil:
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[u]
            if du >= max_hops:
                continue
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if dist[v] < 0:
                    dist[v] = du + 1
                    queue[tail] = v
                    tail += 1
    return dist_arr


def neighbor_sum(const cnp.int64_t[::1] indptr, const cnp.int32_t[::1] indices,
                 const double[:, ::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t t_max = x.shape[1]
    out_arr = np.zeros((n, t_max), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, t
    cdef cnp.int32_t j
    with nogil:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                for t in range(t_max):
                    out[i, t] += x[j, t]
    return out_arr


cdef inline void _fen_add(double[::1] tree, Py_ssize_t i, double delta) nogil:
    cdef Py_ssize_t size = tree.shape[0] - 1
    i += 1
    while i <= size:
        tree[i] += delta
        i += i & (-i)


cdef inline Py_ssize_t _fen_find(double[::1] tree, double target, Py_ssize_t top) nogil:
    # smallest index whose inclusive prefix sum exceeds target
    cdef Py_ssize_t pos = 0, step = top
    cdef Py_ssize_t size = tree.shape[0] - 1
    while step > 0:
        if pos + step <= size and tree[pos + step] <= target:
            pos += step
            target -= tree[pos]
        step >>= 1
    return pos


def ba_attach(Py_ssize_t n, Py_ssize_t m, double power, const double[::1] uniforms):
    """Preferential attachment after an (m+1)-clique seed.

    Each arriving node takes ``m`` uniforms and samples distinct targets
    without replacement from weights ``degree**power``.
    """
    cdef Py_ssize_t seed_n = m + 1
    cdef Py_ssize_t n_edges = seed_n * m // 2 + (n - seed_n) * m
    edges_arr = np.empty((n_edges, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] edges = edges_arr
    cdef cnp.int64_t[::1] deg = np.zeros(n, dtype=np.int64)
    cdef double[::1] weight = np.zeros(n, dtype=np.float64)
    cdef double[::1] tree = np.zeros(n + 1, dtype=np.float64)
    cdef cnp.int64_t[::1] picked = np.empty(m, dtype=np.int64)
    cdef Py_ssize_t top = 1
    cdef Py_ssize_t e = 0, i, j, k, u, v, used = 0
    cdef double total = 0.0, wnew, target
    while top * 2 <= n:
        top *= 2
    with nogil:
        for i in range(seed_n):
            for j in range(i + 1, seed_n):
                edges[e, 0] = i
                edges[e, 1] = j
                e += 1
            deg[i] = m
        for i in range(seed_n):
            weight[i] = pow(<double>deg[i], power)
            _fen_add(tree, i, weight[i])
            total += weight[i]
        for u in range(seed_n, n):
            for k in range(m):
                target = uniforms[used] * total
                used += 1
                v = _fen_find(tree, target, top)
                if v >= u:
                    v = u - 1
                if weight[v] == 0.0:
                    # rounding residue landed on a dead slot; walk to a live one
                    j = v
                    while j < u and weight[j] == 0.0:
                        j += 1
                    if j == u:
                        j = v
                        while weight[j] == 0.0:
                            j -= 1
                    v = j
                picked[k] = v
                _fen_add(tree, v, -weight[v])
                total -= weight[v]
                weight[v] = 0.0
            for k in range(m):
                v = picked[k]
                edges[e, 0] = v
                edges[e, 1] = u
                e += 1
                deg[v] += 1
                wnew = pow(<double>deg[v], power)
                weight[v] = wnew
                _fen_add(tree, v, wnew)
                total += wnew
            deg[u] = m
            wnew = pow(<double>m, power)
            weight[u] = wnew
            _fen_add(tree, u, wnew)
            total += wnew
    return edges_arr
