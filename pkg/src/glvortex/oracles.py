"""Brute-force LP oracles for the transport quantities.

Both are written over potentials ξ (the dual side), so they share nothing
with the min-cost-flow solvers in :mod:`glvortex.mass_displacement` beyond
the edge list of the region.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, vstack

from .mass_displacement import MetricRegion


def _lipschitz_rows(region: MetricRegion, n_extra: int = 0):
    flat, _, src, dst, bnd = region.graph()
    n = flat.size
    h = region.geometry.spacing
    m = src.size
    rows = np.r_[np.arange(m), np.arange(m)]
    cols = np.r_[src, dst]
    vals = np.r_[np.ones(m), -np.ones(m)]
    blocks = [coo_matrix((vals, (rows, cols)), shape=(m, n + n_extra))]
    rhs = [np.full(m, h)]
    if bnd.size:
        # |ξ| <= h on nodes adjacent to the zero exterior
        k = bnd.size
        blocks.append(coo_matrix((np.ones(k), (np.arange(k), bnd)), shape=(k, n + n_extra)))
        blocks.append(coo_matrix((-np.ones(k), (np.arange(k), bnd)), shape=(k, n + n_extra)))
        rhs += [np.full(k, h), np.full(k, h)]
    return flat, vstack(blocks).tocsr(), np.concatenate(rhs)


def lp_dual_norm(f: np.ndarray, region: MetricRegion) -> float:
    """sup Σ f ξ over 1-Lipschitz ξ on the region (zero on the exterior)."""
    flat, A, b = _lipschitz_rows(region)
    c = -np.asarray(f, float).ravel()[flat]
    if not region.has_exterior and abs(c.sum()) > 1e-12 * max(1.0, np.abs(c).sum()):
        return float("inf")
    bounds = [(None, None)] * flat.size
    if not region.has_exterior:
        bounds[0] = (0.0, 0.0)  # fix the additive constant
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs-ipm")
    if res.status != 0:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return float(-res.fun)


def lp_displacement_residual(f: np.ndarray, region: MetricRegion) -> float:
    """min ‖f − g‖ over node measures 0 <= g <= f₊.

    By LP duality this equals sup_ξ Σ f ξ − Σ f₊ max(ξ, 0) over 1-Lipschitz ξ;
    the auxiliary t >= max(ξ, 0) linearizes the positive part.
    """
    flat, A, b = _lipschitz_rows(region, n_extra=int(np.count_nonzero(region.nodes)))
    n = flat.size
    fv = np.asarray(f, float).ravel()[flat]
    fp = np.maximum(fv, 0.0)
    link = coo_matrix((np.r_[np.ones(n), -np.ones(n)], (np.r_[np.arange(n), np.arange(n)],
                                                       np.r_[np.arange(n), n + np.arange(n)])),
                      shape=(n, 2 * n))
    A = vstack([A, link]).tocsr()
    b = np.r_[b, np.zeros(n)]
    res = linprog(np.r_[-fv, fp], A_ub=A, b_ub=b,
                  bounds=[(None, None)] * n + [(0.0, None)] * n, method="highs-ipm")
    if res.status != 0:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return float(-res.fun)

