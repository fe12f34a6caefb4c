"""Lipschitz-dual transport norm and partial displacement of f into g.

Ball-level displacement and the assembly of the bounded-below density g
build on the same min-cost flow.

All norms are taken with respect to the 4-neighbour graph metric (edge
length = grid spacing). Regions may carry a free exterior where test
functions vanish; mass can then leave or enter through the boundary at the
cost of the distance to it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .covering_localization import AtomicMeasure, Covering
from .grid_field import GridGeometry

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MetricRegion:
    """Node set A of a grid with an optional zero-boundary exterior.

    ``exterior`` marks nodes of ω ∖ A; with ``open_edges`` the nodes past the
    grid edge also count as exterior. An A-node next to the exterior is a
    boundary node: test functions satisfy |ξ| <= h there.
    """

    geometry: GridGeometry
    nodes: np.ndarray
    exterior: np.ndarray | None = None
    open_edges: bool = False

    def __post_init__(self):
        A = np.asarray(self.nodes, bool)
        if A.shape != self.geometry.shape:
            raise ValueError("region shape mismatch")
        if not A.any():
            raise ValueError("region is empty")
        object.__setattr__(self, "nodes", A)
        ext = np.zeros_like(A) if self.exterior is None else np.asarray(self.exterior, bool) & ~A
        object.__setattr__(self, "exterior", ext)

    @classmethod
    def closed(cls, geometry, nodes) -> "MetricRegion":
        """No exterior: test functions are only gradient-bounded."""
        return cls(geometry, nodes)

    @classmethod
    def with_exterior(cls, geometry, nodes, open_edges: bool = False) -> "MetricRegion":
        """Every grid node outside A is exterior."""
        A = np.asarray(nodes, bool)
        return cls(geometry, A, ~A, open_edges)

    @classmethod
    def ball(cls, geometry, center, radius, zero_boundary: bool = False) -> "MetricRegion":
        A = geometry.disc_nodes(center, radius) & geometry.mask
        if zero_boundary:
            return cls(geometry, A, geometry.mask & ~A)
        return cls(geometry, A)

    @property
    def has_exterior(self) -> bool:
        return bool(self.exterior.any() or (self.open_edges and self._edge_touch().any()))

    def _edge_touch(self):
        t = np.zeros_like(self.nodes)
        t[0, :] = t[-1, :] = True
        t[:, 0] = t[:, -1] = True
        return t & self.nodes

    def boundary_nodes(self) -> np.ndarray:
        A, E = self.nodes, self.exterior
        b = np.zeros_like(A)
        b[1:, :] |= E[:-1, :]
        b[:-1, :] |= E[1:, :]
        b[:, 1:] |= E[:, :-1]
        b[:, :-1] |= E[:, 1:]
        if self.open_edges:
            b |= self._edge_touch()
        return b & A

    def graph(self):
        """Local numbering, both-direction grid arcs and boundary node ids."""
        A = self.nodes
        flat = np.flatnonzero(A.ravel())
        local = -np.ones(A.size, np.int64)
        local[flat] = np.arange(flat.size)
        loc = local.reshape(A.shape)
        a = np.r_[loc[:-1, :][A[:-1, :] & A[1:, :]], loc[:, :-1][A[:, :-1] & A[:, 1:]]]
        b = np.r_[loc[1:, :][A[:-1, :] & A[1:, :]], loc[:, 1:][A[:, :-1] & A[:, 1:]]]
        bnd = loc[self.boundary_nodes()]
        return flat, loc, np.r_[a, b], np.r_[b, a], bnd

    def diameter(self) -> float:
        X, Y = self.geometry.coords
        xs, ys = X[self.nodes], Y[self.nodes]
        return float(math.hypot(xs.max() - xs.min(), ys.max() - ys.min()))


@dataclass
class TransportPlan:
    """Flows on grid arcs (global flat node ids), boundary exchange and disposal.

    ``sink`` maps boundary node -> net mass sent to the exterior (negative
    when drawn from it); ``disposed`` maps node -> mass removed in place.
    """

    spacing: float
    arcs: np.ndarray          # (k, 2) global flat ids
    flows: np.ndarray
    sink: dict = field(default_factory=dict)
    disposed: dict = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return float(self.spacing * (np.abs(self.flows).sum() + sum(abs(v) for v in self.sink.values())))

    def divergence(self, shape) -> np.ndarray:
        """Net outflow per node (grid arcs, exterior exchange and disposal)."""
        out = np.zeros(int(np.prod(shape)))
        if self.flows.size:
            np.add.at(out, self.arcs[:, 0], self.flows)
            np.add.at(out, self.arcs[:, 1], -self.flows)
        for k, v in self.sink.items():
            out[k] += v
        for k, v in self.disposed.items():
            out[k] += v
        return out.reshape(shape)

    def to_json(self) -> str:
        return json.dumps({
            "spacing": self.spacing,
            "edges": [[int(a), int(b), float(f)] for (a, b), f in zip(self.arcs, self.flows)],
            "sink": {str(k): float(v) for k, v in sorted(self.sink.items())},
            "disposed": {str(k): float(v) for k, v in sorted(self.disposed.items())},
            "cost": self.cost,
        }, sort_keys=True)


@dataclass
class FlowResult:
    value: float
    plan: TransportPlan
    witness: np.ndarray       # node field ξ (0 off the region)
    dual_value: float
    pivots: int

    @property
    def gap(self) -> float:
        return abs(self.value - self.dual_value)


def _masses(f, region: MetricRegion) -> np.ndarray:
    m = f.node_masses() if isinstance(f, AtomicMeasure) else np.asarray(f, float)
    if m.shape != region.geometry.shape:
        raise ValueError("measure and region live on different grids")
    outside = np.abs(m[~region.nodes])
    if outside.size and outside.max() > 1e-12 * max(1.0, np.abs(m).max()):
        raise ValueError("measure has mass outside the region")
    return m


def _solve(m: np.ndarray, region: MetricRegion, dispose: bool) -> FlowResult:
    g = region.geometry
    h = g.spacing
    flat, loc, s, d, bnd = region.graph()
    n = flat.size
    sup = m.ravel()[flat]
    G = n
    has_ext = bnd.size > 0
    if not has_ext and not dispose and abs(sup.sum()) > _TOL * max(1.0, np.abs(sup).sum()):
        raise ValueError("unbounded: region has no exterior and the measure has nonzero total mass")
    pos = np.flatnonzero(sup > 0) if dispose else np.zeros(0, np.int64)
    if dispose and not has_ext and sup.sum() < -_TOL * max(1.0, np.abs(sup).sum()):
        raise ValueError("infeasible: negative total mass in a region without exterior")
    src = np.r_[s, bnd, np.full(bnd.size, G), pos]
    dst = np.r_[d, np.full(bnd.size, G), bnd, np.full(pos.size, G)]
    cost = np.r_[np.ones(s.size + 2 * bnd.size, np.int64), np.zeros(pos.size, np.int64)]
    supply = np.r_[sup, -sup.sum()]
    flow, price, infeas, piv = kernels.network_simplex(n + 1, src, dst, cost, supply)
    if infeas > 1e-8 * max(1.0, np.abs(sup).sum()):
        raise RuntimeError(f"flow solver did not reach feasibility (residual {infeas:.3g})")
    price = np.asarray(price, float)
    xi_loc = h * (price[:n] - price[G])
    if not has_ext and not dispose:
        xi_loc = xi_loc - xi_loc.mean()
    ns = s.size
    grid_flow = flow[:ns]
    # fold the two arc directions into one signed flow per undirected edge
    half = ns // 2
    net = grid_flow[:half] - grid_flow[half:]
    arcs = np.stack([flat[s[:half]], flat[d[:half]]], axis=1)
    keep = np.abs(net) > 0
    out_b = flow[ns:ns + bnd.size] - flow[ns + bnd.size:ns + 2 * bnd.size]
    sink = {int(flat[b]): float(v) for b, v in zip(bnd, out_b) if v != 0}
    disp = flow[ns + 2 * bnd.size:]
    disposed = {int(flat[p]): float(v) for p, v in zip(pos, disp) if v != 0}
    plan = TransportPlan(h, arcs[keep], net[keep], sink, disposed)
    xi = np.zeros(g.shape)
    xi.ravel()[flat] = xi_loc
    value = float(h * (flow @ cost))
    retained = np.zeros(n)
    retained[pos] = disp
    dual = float((sup - retained) @ xi_loc) if dispose else float(sup @ xi_loc)
    return FlowResult(value, plan, xi, dual, int(piv))


def lip_dual_norm(f, region: MetricRegion) -> FlowResult:
    """sup ∫ξ df over ξ with |∇ξ| <= 1 on A and ξ = 0 on the exterior.

    Solved as uncapacitated min-cost flow; the exterior is one ground node.
    The returned witness ξ attains the value (``gap`` reports the primal-dual
    difference).
    """
    return _solve(_masses(f, region), region, dispose=False)


@dataclass
class Displacement:
    g: np.ndarray             # node masses, 0 <= g <= f₊
    residual: float           # ‖f − g‖ (optimal)
    flow: FlowResult
    f: np.ndarray

    @property
    def witness(self) -> np.ndarray:
        return self.flow.witness

    def hypothesis_constant(self) -> float:
        """Smallest C0 with ∫ξ df >= −C0 for the dual witness (|∇ξ| <= 1)."""
        return max(0.0, -float(np.sum(self.f * self.flow.witness)))


def displace(f, region: MetricRegion) -> Displacement:
    """Minimise ‖f − g‖ over node measures 0 <= g <= f₊.

    One min-cost-flow problem: each node with positive mass may keep any part
    of it at zero cost (an arc into the ground node); the rest must be
    transported to negative nodes or, if present, to the exterior.
    """
    m = _masses(f, region)
    res = _solve(m, region, dispose=True)
    g = np.zeros(region.geometry.shape)
    for k, v in res.plan.disposed.items():
        g.ravel()[k] = v
    fp = np.maximum(m, 0.0)
    if np.any(g < -1e-12) or np.any(g > fp + 1e-9 * max(1.0, fp.max())):
        raise RuntimeError("displacement left the admissible range 0 <= g <= f+")
    g = np.clip(g, 0.0, fp)
    return Displacement(g, res.value, res, m)


def displace_cheap(f, region: MetricRegion) -> np.ndarray:
    """g = f₊ (1 − f₋(ω)/f₊(ω)), for f(ω) >= 0."""
    m = _masses(f, region)
    fp, fm = np.maximum(m, 0.0), np.maximum(-m, 0.0)
    P, N = fp.sum(), fm.sum()
    if P - N < -_TOL * max(1.0, P + N):
        raise ValueError("displace_cheap needs f(region) >= 0")
    if P == 0:
        return np.zeros_like(m)
    return fp * max(0.0, 1 - N / P)


# -- ball level ---------------------------------------------------------------------
@dataclass
class BallDisplacement:
    center: tuple
    radius: float
    lam: float
    f: np.ndarray
    g: np.ndarray
    residual: float
    nu_variation: float
    closed: bool              # mass-conserving (no exterior) region used

    @property
    def ratio(self) -> float:
        return self.residual / self.nu_variation if self.nu_variation else 0.0


def ball_excess(e_values: np.ndarray, nu: AtomicMeasure, geometry: GridGeometry, center, radius,
                lam: float) -> tuple:
    """Node masses of f_B = (e − Λν) on the ball's in-domain nodes, and |ν|(B)."""
    mask = geometry.disc_nodes(center, radius) & geometry.mask
    m = np.where(mask, e_values * geometry.cell_area, 0.0)
    inside = nu.atoms_in(mask)
    tv = 0.0
    if inside.any():
        ii, jj = nu.atom_nodes
        np.add.at(m, (ii[inside], jj[inside]), -lam * nu.weights[inside])
        tv = float(np.abs(nu.weights[inside]).sum())
    return m, mask, tv


def displace_in_ball(center, radius: float, e_values: np.ndarray, nu: AtomicMeasure,
                     lam: float) -> BallDisplacement:
    """Optimal displacement of f_B = (e − Λν) 1_B inside the ball.

    Test functions are only gradient-bounded on B (mass is conserved) when
    f_B(B) >= 0; otherwise the ball gets a zero exterior so that the deficit
    can be drawn from outside, and ``closed`` is False.
    """
    g = nu.geometry
    m, mask, tv = ball_excess(e_values, nu, g, center, radius, lam)
    closed = m.sum() >= 0
    region = MetricRegion(g, mask) if closed else MetricRegion(g, mask, g.mask & ~mask)
    if not np.any(m < 0):
        return BallDisplacement(tuple(center), radius, lam, m, np.where(mask, m, 0.0), 0.0, tv, closed)
    d = displace(m, region)
    return BallDisplacement(tuple(center), radius, lam, m, d.g, d.residual, tv, closed)


# -- assembly ----------------------------------------------------------------------------
@dataclass
class CellMeasures:
    """f_a and g_a as node masses for one cell, with its displacement data."""

    alpha: int
    f: np.ndarray
    g: np.ndarray
    c: float = 0.0            # density shift c_a
    residual: float = 0.0
    interior: bool = True


def assemble_g(f: AtomicMeasure, per_cell: dict, cov: Covering) -> np.ndarray:
    """g = f + Σ_a (g_a − f_a), as node masses."""
    g = f.node_masses().copy()
    for alpha, cm in per_cell.items():
        if not 0 <= alpha < len(cov.cells):
            raise ValueError(f"cell {alpha} not in the covering")
        if cm.f.shape != g.shape or cm.g.shape != g.shape:
            raise ValueError(f"cell {alpha} measures live on another grid")
        g += cm.g - cm.f
    return g
