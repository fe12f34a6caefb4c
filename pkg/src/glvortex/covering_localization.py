"""Localization on an l0-lattice covering: cells U_a and A_a, disjoint
extraction of the per-cell ball families, the vortex measure nu and its
per-cell pieces, Cbar_a, Lambda_a, annulus bounds and the excess density f.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .ball_construction import construct
from .constants import DEFAULT, Constants
from .grid_field import ComplexGrid, GridGeometry, ScalarGrid, VectorGrid, bilinear, energy_terms
from .vortex_detect import (
    Ball,
    BallFamily,
    enclosing_circle,
    ZeroOnCircle,
    circle_samples,
    point_distance,
    winding_number,
)


# -- covering -------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Cell:
    index: int
    key: tuple
    center: tuple
    nodes: np.ndarray      # U_a = B(x_a, l0) ∩ Ω
    enlarged: np.ndarray   # A_a = B(x_a, 3 l0) ∩ Ω
    interior: bool         # A_a inside Ω with an eps margin


@dataclass(frozen=True, eq=False)
class Covering:
    geometry: GridGeometry
    ell0: float
    cells: tuple
    overlap: int            # m
    overlap_enlarged: int   # m'
    lebesgue: float         # l
    neighbours: int         # N: cells U_b meeting B(x_a, 3 l0), maximised over a
    epsilon: float | None = None

    @property
    def r0(self) -> float:
        return self.ell0

    @property
    def r1(self) -> float:
        return 3 * self.ell0

    @property
    def rho_lebesgue(self) -> float:
        return self.lebesgue / (8 * self.overlap)

    @property
    def rho_count(self) -> float:
        return self.ell0 / self.neighbours

    @property
    def rho(self) -> float:
        """Paper-rule radius min(l/(8m), l0/N)."""
        return min(self.rho_lebesgue, self.rho_count)

    def __len__(self):
        return len(self.cells)

    def cell_of_point(self, p) -> int | None:
        """Lowest cell index whose U_a contains the node nearest to p."""
        i, j = self.geometry.nearest_node(p)
        for c in self.cells:
            if c.nodes[i, j]:
                return c.index
        return None

    def to_json(self) -> str:
        return json.dumps({
            "ell0": self.ell0, "m": self.overlap, "m_prime": self.overlap_enlarged,
            "lebesgue": self.lebesgue, "N": self.neighbours, "rho": self.rho,
            "cells": [{"index": c.index, "key": list(c.key), "center": list(c.center),
                       "interior": c.interior, "nodes": int(c.nodes.sum())} for c in self.cells],
        }, sort_keys=True)


def _lebesgue_number(geom: GridGeometry, cells) -> float:
    """min over nodes of max over cells of dist(x, Ω ∖ U_a), by EDT per cell."""
    h = geom.spacing
    best = np.zeros(geom.shape)
    omega = geom.mask
    for c in cells:
        ii, jj = np.nonzero(c.nodes)
        pad = int(math.ceil(2 * 0.5 * (ii.max() - ii.min() + 1))) + 2
        sx = slice(max(ii.min() - pad, 0), min(ii.max() + pad + 1, geom.nx))
        sy = slice(max(jj.min() - pad, 0), min(jj.max() + pad + 1, geom.ny))
        feat = omega[sx, sy] & ~c.nodes[sx, sy]
        if not feat.any():
            d = np.full(feat.shape, np.inf)
        else:
            d = h * ndimage.distance_transform_edt(~feat)
        d = np.where(c.nodes[sx, sy], d, 0.0)
        best[sx, sy] = np.maximum(best[sx, sy], d)
    return float(best[omega].min())


def build_covering(geom: GridGeometry, ell0: float = DEFAULT.ell0, epsilon: float | None = None) -> Covering:
    """Cells B(x_a, l0) ∩ Ω for x_a ∈ l0 Z² meeting the domain.

    Measures the overlap numbers m (of U_a) and m' (of A_a), the Lebesgue
    number l and the neighbour count N. ``epsilon`` (if given) marks cells
    whose A_a stays farther than eps from the domain complement as interior.
    """
    if not 0 < ell0 < 0.125:
        raise ValueError("ell0 must satisfy 0 < ell0 < 1/8")
    X, Y = geom.coords
    om = geom.mask
    xs, ys = X[om], Y[om]
    diam = math.hypot(xs.max() - xs.min(), ys.max() - ys.min())
    if diam < 4 * ell0:
        raise ValueError("domain diameter must be at least 4 l0")
    k0 = int(math.floor((xs.min() - ell0) / ell0)), int(math.ceil((xs.max() + ell0) / ell0))
    l0 = int(math.floor((ys.min() - ell0) / ell0)), int(math.ceil((ys.max() + ell0) / ell0))
    dist = geom.dist_to_complement
    cells = []
    cnt = np.zeros(geom.shape, np.int64)
    cnt_A = np.zeros(geom.shape, np.int64)
    for ki in range(k0[0], k0[1] + 1):
        for kj in range(l0[0], l0[1] + 1):
            c = (ki * ell0, kj * ell0)
            r2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2
            nodes = (r2 <= ell0**2 * (1 + 1e-12)) & om
            if not nodes.any():
                continue
            big = (r2 <= 9 * ell0**2 * (1 + 1e-12)) & om
            full_big = r2 <= 9 * ell0**2 * (1 + 1e-12)
            # A_a must lie inside Ω and keep its ε-margin
            margin = epsilon if epsilon is not None else 0.0
            interior = bool(np.all(om[full_big])) and (
                point_distance(geom, dist, c) > 3 * ell0 + margin)
            cells.append(Cell(len(cells), (ki, kj), c, nodes, big, interior))
            cnt += nodes
            cnt_A += big
    if not cells or cnt[om].min() < 1:
        raise ValueError("degenerate mask: some domain nodes are not covered")
    N = 0
    for a in cells:
        n = sum(1 for b in cells if math.dist(a.center, b.center) <= 4 * ell0 * (1 + 1e-12)
                and np.any(b.nodes & ((X - a.center[0]) ** 2 + (Y - a.center[1]) ** 2 <= 9 * ell0**2)))
        N = max(N, n)
    return Covering(geom, float(ell0), tuple(cells), int(cnt.max()), int(cnt_A.max()),
                    _lebesgue_number(geom, cells), N, epsilon)


# -- measures -------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Atoms at points plus an optional node density (mass = density * h²)."""

    geometry: GridGeometry
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: np.ndarray | None = None
    cells: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, float).reshape(-1, 2)
        w = np.asarray(self.weights, float).reshape(-1)
        if pts.shape[0] != w.size:
            raise ValueError("points and weights differ in length")
        if not np.all(np.isfinite(w)):
            raise ValueError("non-finite atom weight")
        if len({tuple(p) for p in pts}) != len(pts):
            raise ValueError("atoms must sit at distinct points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.density is not None:
            d = np.asarray(self.density, float)
            if d.shape != self.geometry.shape:
                raise ValueError("density shape mismatch")
            object.__setattr__(self, "density", d)
        if self.cells is not None:
            object.__setattr__(self, "cells", np.asarray(self.cells, np.int64).reshape(-1))

    @classmethod
    def from_density(cls, geometry, density) -> "AtomicMeasure":
        return cls(geometry, density=np.where(geometry.mask, density, 0.0))

    @property
    def atom_nodes(self) -> tuple:
        g = self.geometry
        ij = [g.nearest_node(p) for p in self.points]
        return (np.array([a for a, _ in ij], np.int64), np.array([b for _, b in ij], np.int64))

    def node_masses(self) -> np.ndarray:
        """Masses lumped on nodes: density * h² plus each atom at its nearest node."""
        g = self.geometry
        out = np.zeros(g.shape) if self.density is None else self.density * g.cell_area
        out = np.array(out, dtype=float)
        if self.weights.size:
            ii, jj = self.atom_nodes
            np.add.at(out, (ii, jj), self.weights)
        return out

    def node_density(self) -> np.ndarray:
        return self.node_masses() / self.geometry.cell_area

    def total(self, region=None) -> float:
        m = self.node_masses()
        return float(m.sum() if region is None else m[region].sum())

    def total_variation(self, region=None) -> float:
        m = np.abs(self.node_masses())
        return float(m.sum() if region is None else m[region].sum())

    @property
    def atom_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def atoms_in(self, mask: np.ndarray) -> np.ndarray:
        if not self.weights.size:
            return np.zeros(0, bool)
        ii, jj = self.atom_nodes
        return np.asarray(mask, bool)[ii, jj]

    def restrict_cell(self, alpha: int) -> "AtomicMeasure":
        keep = self.cells == alpha if self.cells is not None else np.zeros(self.weights.size, bool)
        return AtomicMeasure(self.geometry, self.points[keep], self.weights[keep], None, self.cells[keep]
                             if self.cells is not None else None)

    def scaled(self, c: float) -> "AtomicMeasure":
        return AtomicMeasure(self.geometry, self.points, c * self.weights,
                             None if self.density is None else c * self.density, self.cells)

    def positive_atoms(self) -> "AtomicMeasure":
        keep = self.weights > 0
        return AtomicMeasure(self.geometry, self.points[keep], self.weights[keep], None,
                             None if self.cells is None else self.cells[keep])

    def negative_atoms(self) -> "AtomicMeasure":
        """(ν)₋ as a nonnegative measure."""
        keep = self.weights < 0
        return AtomicMeasure(self.geometry, self.points[keep], -self.weights[keep], None,
                             None if self.cells is None else self.cells[keep])

    def to_json(self) -> str:
        return json.dumps({
            "atoms": [{"x": float(p[0]), "y": float(p[1]), "w": float(w)}
                      for p, w in zip(self.points, self.weights)],
            "cells": None if self.cells is None else [int(c) for c in self.cells],
            "density_mass": None if self.density is None else float(self.density.sum() * self.geometry.cell_area),
        }, sort_keys=True)


def n_alpha(nu: AtomicMeasure, n_cells: int) -> np.ndarray:
    """n_a = |ν_a| / 2π per cell."""
    out = np.zeros(n_cells)
    if nu.weights.size:
        np.add.at(out, nu.cells, np.abs(nu.weights) / (2 * np.pi))
    return out


# -- per-cell construction and extraction ---------------------------------------
@dataclass
class CellConstruction:
    """Per-cell output of the ball construction at radius r."""

    alpha: int
    family: BallFamily
    verdict: object
    c_bar: float


def construct_cells(u: ComplexGrid, a: VectorGrid, cov: Covering, r: float, e: ScalarGrid,
                    constants: Constants = DEFAULT, c_bar=None) -> dict:
    """Run ``construct`` on every cell whose U_a meets the sublevel set."""
    S = np.abs(u.values) <= 0.5
    out = {}
    for c in cov.cells:
        if not np.any(S & c.nodes):
            continue
        cb = 2.0 if c_bar is None else float(c_bar.get(c.index, 2.0))
        fam, verdict, _ = construct(u, a, r, cb, region=c.nodes, constants=constants, e=e)
        tagged = BallFamily(fam.balls, dict(fam.meta, cell=c.index))
        out[c.index] = CellConstruction(c.index, tagged, verdict, cb)
    return out


def _components(balls):
    n = len(balls)
    par = list(range(n))

    def find(x):
        while par[x] != x:
            par[x] = par[par[x]]
            x = par[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if balls[i].meets(balls[j]):
                par[find(j)] = find(i)
    comp = {}
    for i in range(n):
        comp.setdefault(find(i), []).append(i)
    return list(comp.values())


def enclose_balls(balls) -> Ball:
    """Smallest disc (to sampling accuracy, rounded outward) containing the balls;
    degree is the sum."""
    n = 128
    t = 2 * np.pi * np.arange(n) / n
    xs = np.concatenate([b.center[0] + b.radius * np.cos(t) for b in balls])
    ys = np.concatenate([b.center[1] + b.radius * np.sin(t) for b in balls])
    c, r = enclosing_circle(xs, ys)
    r = r / math.cos(np.pi / n)
    r = max([r] + [math.dist(c, b.center) + b.radius for b in balls])
    return Ball(c, r, sum(b.degree for b in balls), compact=False)


def _depth(cov: Covering, alpha: int, balls) -> float:
    """How far the balls sit inside B(x_a, l0): l0 - max(|c - x_a| + r)."""
    x = cov.cells[alpha].center
    return cov.ell0 - max(math.dist(b.center, x) + b.radius for b in balls)


def _home_cell(cov: Covering, b: Ball, fallback: int) -> int:
    alpha = cov.cell_of_point(b.center)
    return fallback if alpha is None else alpha


def extract_disjoint(per_cell: dict, cov: Covering, u: ComplexGrid) -> BallFamily:
    """Disjoint subcollection of the per-cell families that still covers
    {|u| <= 1/2} ∩ {dist(., Ω^c) > eps}.

    Balls from all cells are grouped into connected components of the
    union; in each component the balls of the cell holding the component
    deepest inside its U_a (lowest index on ties) whose own balls cover the component's share of the sublevel set are kept and the
    foreign ones dropped. When no cell qualifies the component is replaced
    by the smallest disc enclosing it (counted in ``meta['merged_components']``); a
    merged ball may meet a later component, so merging repeats until the
    family is disjoint. ``meta['cells']`` records the source cell of each
    kept ball; ``meta['outside_cell']`` counts balls whose in-domain nodes
    leave their cell.
    """
    g = cov.geometry
    eps = u.epsilon
    target = (np.abs(u.values) <= 0.5) & g.mask & (g.dist_to_complement > eps)
    tagged = []
    for alpha in sorted(per_cell):
        fam = per_cell[alpha].family if isinstance(per_cell[alpha], CellConstruction) else per_cell[alpha]
        tagged += [(alpha, b) for b in fam]
    balls = [b for _, b in tagged]
    keep_idx = []
    merged_components = 0
    covered_all = np.zeros(g.shape, bool)
    for comp in _components(balls):
        masks = {i: balls[i].node_mask(g) for i in comp}
        union = np.zeros(g.shape, bool)
        for m in masks.values():
            union |= m
        need = target & union
        chosen = None
        for alpha in sorted({tagged[i][0] for i in comp}, key=lambda al: (-_depth(cov, al, [balls[i] for i in comp]), al)):
            mine = [i for i in comp if tagged[i][0] == alpha]
            cov_m = np.zeros(g.shape, bool)
            for i in mine:
                cov_m |= masks[i]
            if np.all(cov_m[need]):
                chosen = mine
                break
        if chosen is None:
            # no single cell covers this component (balls wider than the cells
            # allow): replace the component by one ball containing all of it
            merged_components += 1
            big = enclose_balls([balls[i] for i in comp])
            balls.append(big)
            tagged.append((_home_cell(cov, big, min(tagged[i][0] for i in comp)), big))
            masks[len(balls) - 1] = big.node_mask(g)
            chosen = [len(balls) - 1]
        keep_idx += chosen
        for i in chosen:
            covered_all |= masks[i]
    if np.any(target & ~covered_all):
        raise RuntimeError("disjoint extraction lost part of the sublevel set")
    keep_idx.sort(key=lambda i: (tagged[i][0], i))
    kept = [balls[i] for i in keep_idx]
    cells = [tagged[i][0] for i in keep_idx]
    again = True
    while again:
        again = False
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                if kept[i].meets(kept[j]):
                    kept[i] = enclose_balls([kept[i], kept[j]])
                    cells[i] = _home_cell(cov, kept[i], min(cells[i], cells[j]))
                    del kept[j], cells[j]
                    merged_components += 1
                    again = True
                    break
            if again:
                break
    kept, cells = tuple(kept), tuple(cells)
    outside = 0
    for b, alpha in zip(kept, cells):
        bn = b.node_mask(g) & g.mask
        if np.any(bn & ~cov.cells[alpha].nodes):
            outside += 1
    fam = BallFamily(kept, {"cells": cells, "merged_components": merged_components, "outside_cell": outside})
    if not fam.is_disjoint():
        raise RuntimeError("extracted family is not disjoint")
    return fam


def nested_family(bep: BallFamily, per_cell_r: dict, r: float, rho: float) -> BallFamily:
    """Balls of the r-level per-cell constructions contained in surviving
    rho-level balls of the same cell. At r >= rho this is ``bep`` itself."""
    if r >= rho:
        return bep
    out, cells = [], []
    for B, alpha in zip(bep, bep.meta["cells"]):
        fam = per_cell_r.get(alpha)
        if fam is None:
            continue
        fam = fam.family if isinstance(fam, CellConstruction) else fam
        for b in fam:
            if B.contains_ball(b):
                out.append(b)
                cells.append(alpha)
    return BallFamily(tuple(out), {"cells": tuple(cells), "r": r})


def small_radius(eps: float, rho: float) -> float:
    """Radius of the small family: sqrt(eps) capped at rho."""
    return min(math.sqrt(eps), rho)


# -- vortex measure ---------------------------------------------------------------
def vortex_measure(small: BallFamily, u: ComplexGrid, cov: Covering) -> AtomicMeasure:
    """ν = Σ 2π d_B δ_{a_B} over balls with dist(B, Ω^c) > eps.

    d_B is the winding of u on ∂B (the construction degree is used when u
    vanishes on the circle). Each atom goes to the cell that produced its
    ball when that cell's U_a contains the ball's in-domain nodes, else to
    the lowest-index cell that does, else to the cell containing its centre.
    """
    g = u.geometry
    eps = u.epsilon
    dist = g.dist_to_complement
    pts, w, cells = [], [], []
    tags = small.meta.get("cells")
    for k, b in enumerate(small):
        if point_distance(g, dist, b.center) - b.radius <= eps:
            continue
        try:
            d = winding_number(u, b.center, b.radius)
        except (ZeroOnCircle, ValueError):
            d = b.degree
        if d == 0:
            continue
        bn = b.node_mask(g) & g.mask
        homes = [c.index for c in cov.cells if not np.any(bn & ~c.nodes)]
        if tags is not None and tags[k] in homes:
            alpha = tags[k]
        elif homes:
            alpha = homes[0]
        else:
            alpha = cov.cell_of_point(b.center)
        pts.append(b.center)
        w.append(2 * np.pi * d)
        cells.append(alpha)
    return AtomicMeasure(g, np.array(pts).reshape(-1, 2), np.array(w), None, np.array(cells, np.int64))


def vorticity_mass_bound(nu: AtomicMeasure, e: ScalarGrid, eps: float) -> tuple:
    """(|ν|(Ω), 16 e(Ω)/|log eps|)."""
    return nu.atom_variation, 16 * e.integrate() / abs(math.log(eps))


# -- Cbar_a and Lambda_a ------------------------------------------------------------
def c_bar_alpha(n: float, e_a: float, M: float, eps: float, m_prime: int | None = None,
                strict: bool = False) -> float:
    """max(M n_a, 3 e_a/|log eps|) if n_a != 0, else 2.

    With ``strict`` and ``m_prime`` given, M must exceed 12 m' π.
    """
    if isinstance(n, AtomicMeasure):
        n = n.atom_variation / (2 * np.pi)
    if strict and m_prime is not None and not M > 12 * m_prime * math.pi:
        raise ValueError(f"M = {M} must exceed 12 m' pi = {12 * m_prime * math.pi:.4g}")
    if n == 0:
        return 2.0
    return max(M * n, 3 * e_a / abs(math.log(eps)))


@dataclass(frozen=True)
class LambdaAlpha:
    value: float
    nonneg: bool
    below_half_log: bool
    eq24_slack: float
    cbar_in_range: bool


def lambda_alpha(eps: float, r: float, c_bar: float, constants: Constants = DEFAULT,
                 strict: bool = True) -> LambdaAlpha:
    """Λ = ½(log(r/(eps Cbar)) − C) with the per-ball constant C.

    Checks 0 <= Λ <= ½|log eps| and ½|log eps| − Λ <= ½(β|log eps| + |log r| + C0).
    With ``strict`` the range 2 <= Cbar <= (r/eps)^{1/2} and eps^{1/2} < r is enforced.
    """
    if c_bar < 2:
        raise ValueError("Cbar must be at least 2")
    in_range = c_bar <= math.sqrt(r / eps) and r > math.sqrt(eps)
    if strict and not in_range:
        raise ValueError(f"Cbar = {c_bar:.4g} or r = {r:.4g} outside the admissible range for eps = {eps:.4g}")
    L = 0.5 * (math.log(r / (eps * c_bar)) - constants.C_ball)
    half = 0.5 * abs(math.log(eps))
    rhs = 0.5 * (constants.beta * abs(math.log(eps)) + abs(math.log(r)) + constants.C0)
    return LambdaAlpha(L, L >= 0, L <= half, rhs - (half - L), in_range)


# -- annulus bound ----------------------------------------------------------------------
def good_radii(center, r0: float, r1: float, balls) -> list:
    """T = (r0, r1) minus the shadows [|c - x| - r, |c - x| + r] of the balls."""
    segs = [(r0, r1)]
    for b in balls:
        d = math.dist(center, b.center)
        lo, hi = d - b.radius, d + b.radius
        nxt = []
        for a, c in segs:
            if hi <= a or lo >= c:
                nxt.append((a, c))
                continue
            if lo > a:
                nxt.append((a, lo))
            if hi < c:
                nxt.append((hi, c))
        segs = nxt
    return segs


@dataclass
class AnnulusReport:
    alpha: int
    lhs: float               # ∫_T [∮_{γ_t} (kinetic + potential) + ½∫_{B_t} h²] dt
    rhs: float               # c_ann (D0+ − D1−)₊²
    c_ann: float
    measure_T: float
    log_measure_T: float
    D0_plus: int
    D1_minus: int
    n_alpha: float
    energy_outside: float    # e(A_a ∖ B)
    third_case: bool
    windings: list = field(default_factory=list)

    @property
    def c_measured(self) -> float:
        return self.energy_outside / self.n_alpha**2 if self.n_alpha else float("nan")


def annulus_bound(u: ComplexGrid, a: VectorGrid, cov: Covering, alpha: int, balls: BallFamily,
                  n: float, e: ScalarGrid | None = None, dt: float | None = None) -> AnnulusReport:
    """Circle bounds integrated over the radii t ∈ (l0, 3 l0) whose circle
    about x_a avoids every ball.

    The per-circle bound is π d_t²/(t(1 + t/2)) at |u| ≈ 1; integrating over
    T with d_t >= D0+ − D1− gives rhs = c_ann (D0+ − D1−)₊², c_ann =
    π/(1 + r1/2) ∫_T dt/t.
    """
    g = u.geometry
    cell = cov.cells[alpha]
    x = cell.center
    r0, r1 = cov.r0, cov.r1
    segs = good_radii(x, r0, r1, balls)
    mT = sum(c - b for b, c in segs)
    if mT < cov.ell0 * (1 - 1e-9):
        raise ValueError(f"good radii measure {mT:.4g} below l0 in cell {alpha}; rho too large")
    t_terms = energy_terms(u, a)
    dens = t_terms["kinetic"] + t_terms["potential"]
    h2 = t_terms["field"]
    dt = dt or g.spacing
    lhs = 0.0
    wind = []
    for lo, hi in segs:
        k = max(1, int(math.ceil((hi - lo) / dt)))
        step = (hi - lo) / k
        for t in lo + step * (np.arange(k) + 0.5):
            nsm = circle_samples(t, g.spacing)
            th = 2 * np.pi * np.arange(nsm) / nsm
            px, py = x[0] + t * np.cos(th), x[1] + t * np.sin(th)
            line = float(np.sum(bilinear(g, dens, px, py))) * 2 * np.pi * t / nsm
            area = ScalarGrid(g, h2).integrate_disc(x, t)
            lhs += step * (line + area)
            try:
                wind.append((float(t), winding_number(u, x, float(t))))
            except (ZeroOnCircle, ValueError):
                pass
    D0p = sum(max(b.degree, 0) for b in balls if math.dist(b.center, x) <= r0)
    D1m = sum(max(-b.degree, 0) for b in balls if math.dist(b.center, x) <= r1)
    logT = sum(math.log(c / b) for b, c in segs)
    c_ann = math.pi / (1 + r1 / 2) * logT
    e = e if e is not None else ScalarGrid(g, t_terms["kinetic"] + t_terms["potential"] + h2)
    outside = cell.enlarged & ~balls.cover_mask(g)
    eout = e.integrate(outside)
    third = n > 0 and D0p >= n / 10 and D1m <= n / 20
    return AnnulusReport(alpha, lhs, c_ann * max(D0p - D1m, 0) ** 2, c_ann, mT, logT, D0p, D1m, n, eout,
                         third, wind)


# -- excess density -----------------------------------------------------------------------
def assemble_f(e: ScalarGrid, nu: AtomicMeasure, eps: float) -> AtomicMeasure:
    """f = e − ½|log eps| ν."""
    if not e.geometry.same_as(nu.geometry):
        raise ValueError("e and nu live on different grids")
    return AtomicMeasure(e.geometry, nu.points, -0.5 * abs(math.log(eps)) * nu.weights,
                         np.array(e.values), nu.cells)


def ball_bound_constant(fam: BallFamily, nu: AtomicMeasure, e: ScalarGrid, eps: float) -> float:
    """Smallest C with e(Ω ∩ B) >= (|log eps|/8 − C)|ν|(B) over the family."""
    g = e.geometry
    worst = -math.inf
    for b in fam:
        mask = b.node_mask(g)
        tv = float(np.abs(nu.weights[nu.atoms_in(mask)]).sum()) if nu.weights.size else 0.0
        if tv == 0:
            continue
        eb = e.integrate_disc(b.center, b.radius)
        worst = max(worst, abs(math.log(eps)) / 8 - eb / tv)
    return worst
