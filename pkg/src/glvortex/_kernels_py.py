"""Pure-Python fallbacks for the compiled kernels in ``_kernels.pyx``.

Same call signatures and return conventions. ``network_simplex`` is served
by the HiGHS dual simplex through :func:`scipy.optimize.linprog`.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog


def label4(mask):
    """Label 4-connected components, numbered by first row-major pixel."""
    m = np.asarray(mask, dtype=bool)
    nx, ny = m.shape
    par = list(range(nx * ny))

    def find(x):
        root = x
        while par[root] != root:
            root = par[root]
        while par[x] != root:
            par[x], x = root, par[x]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra < rb:
            par[rb] = ra
        elif rb < ra:
            par[ra] = rb

    for i, j in zip(*np.nonzero(m)):
        a = i * ny + j
        if i > 0 and m[i - 1, j]:
            union(a, a - ny)
        if j > 0 and m[i, j - 1]:
            union(a, a - 1)
    out = np.zeros((nx, ny), dtype=np.int64)
    root_label: dict[int, int] = {}
    for i, j in zip(*np.nonzero(m)):
        r = find(i * ny + j)
        if r not in root_label:
            root_label[r] = len(root_label) + 1
        out[i, j] = root_label[r]
    return out, len(root_label)


def network_simplex(n, src, dst, cost, supply, block=0):
    """Uncapacitated min-cost flow as a linear program (HiGHS dual simplex).

    Returns ``(flow, price, infeasibility, iterations)`` like the compiled
    kernel. Prices come from the equality-constraint marginals.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    cost = np.asarray(cost, dtype=np.float64)
    b = np.asarray(supply, dtype=np.float64)
    m = src.size
    if np.any(cost < 0):
        raise ValueError("arc costs must be nonnegative")
    if m == 0:
        return np.zeros(0), np.zeros(n, dtype=np.int64), float(np.abs(b).max(initial=0.0)), 0
    cols = np.arange(m)
    inc = sp.csr_matrix(
        (np.r_[np.ones(m), -np.ones(m)], (np.r_[src, dst], np.r_[cols, cols])),
        shape=(n, m),
    )
    res = linprog(cost, A_eq=inc, b_eq=b, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"min-cost flow LP failed: {res.message}")
    price = np.asarray(res.eqlin.marginals, dtype=np.float64)
    # shift so that prices are integral where the LP is exact
    price = price - price.min()
    return np.asarray(res.x), price, 0.0, int(res.nit)
