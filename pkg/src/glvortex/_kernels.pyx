# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

``label4`` labels 4-connected components of a boolean image with a
two-pass union-find. ``network_simplex`` solves uncapacitated
min-cost flow with integer arc costs and real supplies.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline i64 _find(i64[::1] par, i64 x) nogil:
    cdef i64 r = x
    while par[r] != r:
        r = par[r]
    cdef i64 nxt
    while par[x] != r:  # path compression
        nxt = par[x]
        par[x] = r
        x = nxt
    return r


def label4(mask):
    """Label 4-connected components, numbered by first row-major pixel."""
    cdef cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t nx = m.shape[0], ny = m.shape[1]
    cdef i64[::1] par = np.arange(nx * ny, dtype=np.int64)
    cdef Py_ssize_t i, j
    cdef i64 a, b, ra, rb
    with nogil:
        for i in range(nx):
            for j in range(ny):
                if not m[i, j]:
                    continue
                a = i * ny + j
                if i > 0 and m[i - 1, j]:
                    ra = _find(par, a)
                    rb = _find(par, a - ny)
                    if ra < rb:
                        par[rb] = ra
                    elif rb < ra:
                        par[ra] = rb
                if j > 0 and m[i, j - 1]:
                    ra = _find(par, a)
                    rb = _find(par, a - 1)
                    if ra < rb:
                        par[rb] = ra
                    elif rb < ra:
                        par[ra] = rb
    out = np.zeros((nx, ny), dtype=np.int64)
    cdef i64[:, ::1] lab = out
    cdef i64[::1] root_label = np.zeros(nx * ny, dtype=np.int64)
    cdef i64 nlab = 0
    with nogil:
        for i in range(nx):
            for j in range(ny):
                if not m[i, j]:
                    continue
                ra = _find(par, i * ny + j)
                if root_label[ra] == 0:
                    nlab += 1
                    root_label[ra] = nlab
                lab[i, j] = root_label[ra]
    return out, int(nlab)


cdef inline void _detach(i64 x, i64[::1] parent, i64[::1] first_child,
                         i64[::1] next_sib, i64[::1] prev_sib) nogil:
    cdef i64 p = parent[x]
    if prev_sib[x] >= 0:
        next_sib[prev_sib[x]] = next_sib[x]
    else:
        first_child[p] = next_sib[x]
    if next_sib[x] >= 0:
        prev_sib[next_sib[x]] = prev_sib[x]
    next_sib[x] = -1
    prev_sib[x] = -1


cdef inline void _attach(i64 x, i64 p, i64[::1] first_child,
                         i64[::1] next_sib, i64[::1] prev_sib) nogil:
    cdef i64 f = first_child[p]
    next_sib[x] = f
    prev_sib[x] = -1
    if f >= 0:
        prev_sib[f] = x
    first_child[p] = x


def network_simplex(Py_ssize_t n, src, dst, cost, supply, Py_ssize_t block=0):
    """Uncapacitated min-cost flow by the primal network simplex method.

    Minimizes ``sum(cost * flow)`` subject to ``out - in = supply`` at every
    node and ``flow >= 0``. Costs must be nonnegative integers.

    Returns
    -------
    flow : (m,) float64
    price : (n,) int64
        Dual prices with ``price[src] - price[dst] <= cost`` on every arc and
        equality on arcs carrying flow.
    infeasibility : float
        Largest flow left on an artificial arc (zero for balanced data).
    pivots : int
    """
    cdef i64[::1] s_in = np.ascontiguousarray(src, dtype=np.int64)
    cdef i64[::1] d_in = np.ascontiguousarray(dst, dtype=np.int64)
    cdef i64[::1] c_in = np.ascontiguousarray(cost, dtype=np.int64)
    cdef double[::1] b = np.ascontiguousarray(supply, dtype=np.float64)
    cdef Py_ssize_t m = s_in.shape[0]
    if d_in.shape[0] != m or c_in.shape[0] != m or b.shape[0] != n:
        raise ValueError("inconsistent array lengths")
    cdef Py_ssize_t N = n + 1, M = m + n, root = n
    cdef i64[::1] a_src = np.empty(M, dtype=np.int64)
    cdef i64[::1] a_dst = np.empty(M, dtype=np.int64)
    cdef i64[::1] a_cost = np.empty(M, dtype=np.int64)
    cdef double[::1] flow = np.zeros(M, dtype=np.float64)
    cdef cnp.uint8_t[::1] in_tree = np.zeros(M, dtype=np.uint8)
    cdef i64[::1] parent = np.full(N, -1, dtype=np.int64)
    cdef i64[::1] pred = np.full(N, -1, dtype=np.int64)
    cdef cnp.uint8_t[::1] up = np.zeros(N, dtype=np.uint8)
    cdef i64[::1] depth = np.zeros(N, dtype=np.int64)
    cdef i64[::1] pot = np.zeros(N, dtype=np.int64)
    cdef i64[::1] first_child = np.full(N, -1, dtype=np.int64)
    cdef i64[::1] next_sib = np.full(N, -1, dtype=np.int64)
    cdef i64[::1] prev_sib = np.full(N, -1, dtype=np.int64)
    cdef i64[::1] stack = np.empty(N, dtype=np.int64)
    cdef Py_ssize_t e, i
    cdef i64 maxc = 0
    for e in range(m):
        if c_in[e] < 0:
            raise ValueError("arc costs must be nonnegative")
        if s_in[e] < 0 or s_in[e] >= n or d_in[e] < 0 or d_in[e] >= n:
            raise ValueError("arc endpoint out of range")
        a_src[e] = s_in[e]
        a_dst[e] = d_in[e]
        a_cost[e] = c_in[e]
        if c_in[e] > maxc:
            maxc = c_in[e]
    cdef i64 big = (n + 1) * (maxc + 1) + 1
    for i in range(n):
        e = m + i
        a_cost[e] = big
        in_tree[e] = 1
        parent[i] = root
        pred[i] = e
        depth[i] = 1
        if b[i] >= 0:
            # zero-cost artificial arc towards the root
            a_cost[e] = 0
            a_src[e] = i
            a_dst[e] = root
            flow[e] = b[i]
            up[i] = 1
            pot[i] = 0
        else:
            a_src[e] = root
            a_dst[e] = i
            flow[e] = -b[i]
            up[i] = 0
            pot[i] = big
        _attach(i, root, first_child, next_sib, prev_sib)

    if block <= 0:
        block = int(np.sqrt(m)) + 1
    cdef Py_ssize_t next_arc = 0, scanned, cnt, top
    cdef i64 rc, best, k, l, w, x, q, a, u_in, v_in, new_parent, new_pred
    cdef i64 old_parent, old_pred, pp
    cdef cnp.uint8_t new_up, old_up, entering_up
    cdef Py_ssize_t best_arc, leave_node
    cdef int side
    cdef double delta, r
    cdef long pivots = 0
    if m == 0:
        block = 1
    with nogil:
        while m > 0:
            best = 0
            best_arc = -1
            cnt = 0
            for scanned in range(m):
                e = next_arc
                next_arc += 1
                if next_arc == m:
                    next_arc = 0
                if not in_tree[e]:
                    rc = a_cost[e] + pot[a_src[e]] - pot[a_dst[e]]
                    if rc < best:
                        best = rc
                        best_arc = e
                cnt += 1
                if cnt == block:
                    if best_arc >= 0:
                        break
                    cnt = 0
            if best_arc < 0:
                break
            pivots += 1
            e = best_arc
            k = a_src[e]
            l = a_dst[e]
            # join of the cycle
            x = k
            w = l
            while x != w:
                if depth[x] > depth[w]:
                    x = parent[x]
                elif depth[w] > depth[x]:
                    w = parent[w]
                else:
                    x = parent[x]
                    w = parent[w]
            delta = INFINITY
            leave_node = -1
            side = 0
            x = k
            while x != w:
                if up[x]:
                    r = flow[pred[x]]
                    if r < delta:
                        delta = r
                        leave_node = x
                        side = 1
                x = parent[x]
            x = l
            while x != w:
                if not up[x]:
                    r = flow[pred[x]]
                    if r <= delta:
                        delta = r
                        leave_node = x
                        side = 2
                x = parent[x]
            if leave_node < 0:
                break  # unbounded; cannot happen with nonnegative costs
            if delta > 0:
                x = k
                while x != w:
                    if up[x]:
                        flow[pred[x]] -= delta
                    else:
                        flow[pred[x]] += delta
                    x = parent[x]
                x = l
                while x != w:
                    if up[x]:
                        flow[pred[x]] += delta
                    else:
                        flow[pred[x]] -= delta
                    x = parent[x]
                flow[e] += delta
            q = leave_node
            in_tree[pred[q]] = 0
            in_tree[e] = 1
            if side == 1:
                u_in = k
                v_in = l
                entering_up = 1
            else:
                u_in = l
                v_in = k
                entering_up = 0
            # re-hang the cut subtree from u_in, reversing the path to q
            x = u_in
            new_parent = v_in
            new_pred = e
            new_up = entering_up
            while True:
                old_parent = parent[x]
                old_pred = pred[x]
                old_up = up[x]
                _detach(x, parent, first_child, next_sib, prev_sib)
                parent[x] = new_parent
                pred[x] = new_pred
                up[x] = new_up
                _attach(x, new_parent, first_child, next_sib, prev_sib)
                if x == q:
                    break
                new_parent = x
                new_pred = old_pred
                new_up = 1 - old_up
                x = old_parent
            # refresh depth and potentials on the moved subtree
            top = 0
            stack[0] = u_in
            top = 1
            while top > 0:
                top -= 1
                x = stack[top]
                pp = parent[x]
                depth[x] = depth[pp] + 1
                a = pred[x]
                if up[x]:
                    pot[x] = pot[pp] - a_cost[a]
                else:
                    pot[x] = pot[pp] + a_cost[a]
                w = first_child[x]
                while w >= 0:
                    stack[top] = w
                    top += 1
                    w = next_sib[w]
    if best_arc >= 0 and leave_node < 0:
        raise RuntimeError("unbounded min-cost flow")
    out_flow = np.asarray(flow[:m]).copy()
    price = -np.asarray(pot[:n]).copy()
    infeas = float(np.max(np.asarray(flow[m:]))) if n > 0 else 0.0
    return out_flow, price, infeas, int(pivots)
