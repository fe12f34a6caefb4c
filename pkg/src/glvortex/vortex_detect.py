"""Sublevel sets of |u|, their degrees, and the initial ball cover.

A *region* is a boolean node mask playing the role of the open set U; the
default is the grid mask. ``U_eps`` is the set of region nodes at distance
more than eps from the region's complement, and S = {|u| <= 1/2} ∩ U_eps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .constants import DEFAULT, Constants
from .grid_field import ComplexGrid, GridGeometry, ScalarGrid, VectorGrid, bilinear, energy_density, mask_distance


class ZeroOnCircle(ValueError):
    """u vanishes (numerically) at a sampled circle point."""


class CoverEnergyError(RuntimeError):
    pass


# -- regions ------------------------------------------------------------------
def region_distance(geometry: GridGeometry, region: np.ndarray) -> np.ndarray:
    """Distance from each node to the complement of ``region`` (0 outside).

    Computed on the bounding box of the region, which keeps per-cell work
    proportional to the cell size.
    """
    region = np.asarray(region, bool)
    out = np.zeros(geometry.shape)
    if not region.any():
        return out
    ii, jj = np.nonzero(region)
    sx = slice(ii.min(), ii.max() + 1)
    sy = slice(jj.min(), jj.max() + 1)
    out[sx, sy] = mask_distance(region[sx, sy], geometry.spacing)
    return out


def point_distance(geometry: GridGeometry, dist: np.ndarray, p) -> float:
    return float(bilinear(geometry, dist, np.array([p[0]]), np.array([p[1]]))[0])


# -- winding numbers -----------------------------------------------------------
def circle_samples(radius: float, spacing: float) -> int:
    return max(32, math.ceil(4 * math.pi * radius / spacing))


def winding_number(u: ComplexGrid, center, radius: float, n: int | None = None,
                   tol: float = 1e-10) -> int:
    """Degree of u/|u| on the circle of given centre and radius.

    The circle is sampled with step at most spacing/2 and u is bilinearly
    interpolated; principal-branch phase increments are summed.
    """
    g = u.geometry
    if radius <= 0:
        raise ValueError("radius must be positive")
    cx, cy = center
    lo_x, lo_y = g.origin
    hi_x, hi_y = g.x[-1], g.y[-1]
    if cx - radius < lo_x or cx + radius > hi_x or cy - radius < lo_y or cy + radius > hi_y:
        raise ValueError("circle leaves the grid")
    n = n or circle_samples(radius, g.spacing)
    t = 2 * np.pi * np.arange(n) / n
    z = bilinear(g, u.values, cx + radius * np.cos(t), cy + radius * np.sin(t))
    if np.min(np.abs(z)) <= tol:
        raise ZeroOnCircle(f"u vanishes on the circle r={radius:g} about {center}")
    inc = np.angle(np.roll(z, -1) / z)
    return int(round(float(inc.sum()) / (2 * np.pi)))


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def plaquette_winding(u: ComplexGrid) -> np.ndarray:
    """Integer winding of the phase around every grid plaquette.

    Entry ``[i, j]`` is for the plaquette with lower-left node ``(i, j)``.
    Increments are antisymmetric per edge, so summing over a set of
    plaquettes gives the winding along the set's outer boundary.
    """
    th = np.angle(u.values)
    dx = _wrap(th[1:, :] - th[:-1, :])  # edge (i,j)->(i+1,j)
    dy = _wrap(th[:, 1:] - th[:, :-1])  # edge (i,j)->(i,j+1)
    circ = dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]
    return np.rint(circ / (2 * np.pi)).astype(np.int64)


# -- components ----------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ComponentSet:
    """Components of S = {|u| <= 1/2} ∩ U_eps (4-connectivity).

    ``degree[k]`` is None for non-compact components. ``circle_degree[k]``
    holds the cross-check from a surrounding circle when one avoiding S
    exists, else None.
    """

    labels: np.ndarray
    components: tuple
    compact: tuple
    degree: tuple
    circle_degree: tuple
    region: np.ndarray
    u_eps: np.ndarray

    def __len__(self):
        return len(self.components)

    @property
    def essential(self) -> list[int]:
        """Indices of components forming S_E (compact, nonzero degree)."""
        return [k for k in range(len(self)) if self.compact[k] and self.degree[k]]

    @property
    def union(self) -> np.ndarray:
        return self.labels > 0

    def essential_mask(self) -> np.ndarray:
        keep = np.zeros(len(self) + 1, bool)
        keep[[k + 1 for k in self.essential]] = True
        return keep[self.labels]


def sublevel_components(u: ComplexGrid, region=None, level: float = 0.5) -> ComponentSet:
    g = u.geometry
    region = g.mask if region is None else np.asarray(region, bool) & g.mask
    dist = region_distance(g, region)
    u_eps = region & (dist > u.epsilon)
    S = (u.modulus <= level) & u_eps
    labels, n = kernels.label4(S)
    if n == 0:
        return ComponentSet(labels, (), (), (), (), region, u_eps)
    # 1-ring test: a compact component has all 4-neighbours in U_eps
    pad = np.pad(u_eps, 1, constant_values=False)
    ring_ok = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    bad = np.bincount(labels[S & ~ring_ok], minlength=n + 1)
    plaq = plaquette_winding(u)
    # plaquette -> owning component: lowest positive label among its corners
    corners = np.stack([labels[:-1, :-1], labels[1:, :-1], labels[:-1, 1:], labels[1:, 1:]])
    big = n + 1
    own = np.where(corners > 0, corners, big).min(axis=0)
    own[own == big] = 0
    deg_sum = np.bincount(own.ravel(), weights=plaq.ravel(), minlength=n + 1)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n + 1)
    starts = np.cumsum(counts)
    comps, compact, degree, cdeg = [], [], [], []
    X, Y = g.coords
    for k in range(1, n + 1):
        idx = order[starts[k - 1]:starts[k]]
        comps.append(idx)
        is_compact = bad[k] == 0
        compact.append(bool(is_compact))
        if not is_compact:
            degree.append(None)
            cdeg.append(None)
            continue
        degree.append(int(round(deg_sum[k])))
        cdeg.append(_circle_check(u, X.ravel()[idx], Y.ravel()[idx], S, region))
    return ComponentSet(labels, tuple(comps), tuple(compact), tuple(degree), tuple(cdeg),
                        region, u_eps)


def _circle_check(u, xs, ys, S, region):
    g = u.geometry
    c = (float(xs.mean()), float(ys.mean()))
    r = float(np.sqrt(((xs - c[0]) ** 2 + (ys - c[1]) ** 2).max())) + 1.5 * g.spacing
    n = circle_samples(r, g.spacing)
    t = 2 * np.pi * np.arange(n) / n
    px, py = c[0] + r * np.cos(t), c[1] + r * np.sin(t)
    try:
        z = bilinear(g, u.values, px, py)
    except IndexError:
        return None
    if np.min(np.abs(z)) <= 0.5:
        return None
    ii, jj = (np.rint((px - g.origin[0]) / g.spacing).astype(int),
              np.rint((py - g.origin[1]) / g.spacing).astype(int))
    inside = (ii >= 0) & (ii < g.nx) & (jj >= 0) & (jj < g.ny)
    if not inside.all() or not region[ii, jj].all():
        return None
    return int(round(float(np.angle(np.roll(z, -1) / z).sum()) / (2 * np.pi)))


# -- balls -----------------------------------------------------------------------
@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    degree: int = 0
    energy: float = float("nan")
    compact: bool = True

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "degree", int(self.degree))

    def contains_ball(self, other: "Ball", slack: float = 1e-12) -> bool:
        return math.dist(self.center, other.center) + other.radius <= self.radius + slack

    def meets(self, other: "Ball") -> bool:
        return math.dist(self.center, other.center) <= self.radius + other.radius

    def node_mask(self, geometry: GridGeometry) -> np.ndarray:
        return geometry.disc_nodes(self.center, self.radius)


@dataclass(frozen=True)
class BallFamily:
    balls: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.balls)

    def __iter__(self):
        return iter(self.balls)

    def __getitem__(self, k):
        return self.balls[k]

    @property
    def total_radius(self) -> float:
        return float(sum(b.radius for b in self.balls))

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.balls]).reshape(-1, 2)

    @property
    def radii(self) -> np.ndarray:
        return np.array([b.radius for b in self.balls])

    @property
    def degrees(self) -> np.ndarray:
        return np.array([b.degree for b in self.balls], dtype=np.int64)

    def is_disjoint(self, geometry: GridGeometry | None = None, mask=None) -> bool:
        """Pairwise disjoint closed balls; with ``mask``, disjoint on those nodes only."""
        if mask is None:
            for i, a in enumerate(self.balls):
                for b in self.balls[i + 1:]:
                    if a.meets(b):
                        return False
            return True
        cnt = np.zeros(geometry.shape, np.int64)
        for b in self.balls:
            cnt += b.node_mask(geometry) & mask
        return bool(cnt.max(initial=0) <= 1)

    def cover_mask(self, geometry: GridGeometry) -> np.ndarray:
        out = np.zeros(geometry.shape, bool)
        for b in self.balls:
            out |= b.node_mask(geometry)
        return out

    def covers(self, geometry: GridGeometry, nodes: np.ndarray) -> bool:
        return bool(np.all(self.cover_mask(geometry)[nodes]))

    def with_energies(self, e: ScalarGrid, region=None) -> "BallFamily":
        return BallFamily(tuple(replace(b, energy=e.integrate_disc(b.center, b.radius, region))
                                for b in self.balls), dict(self.meta))

    def to_json(self) -> str:
        rows = [{"cx": b.center[0], "cy": b.center[1], "r": b.radius, "degree": b.degree,
                 "energy": None if math.isnan(b.energy) else b.energy} for b in self.balls]
        return json.dumps(rows, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BallFamily":
        rows = json.loads(text)
        return cls(tuple(Ball((r["cx"], r["cy"]), r["r"], r["degree"],
                              float("nan") if r["energy"] is None else r["energy"]) for r in rows))


def enclose_two(a: Ball, b: Ball):
    """Centre of the smallest disc containing both balls, and its radius."""
    d = math.dist(a.center, b.center)
    if d + b.radius <= a.radius:
        return a.center, a.radius
    if d + a.radius <= b.radius:
        return b.center, b.radius
    R = 0.5 * (d + a.radius + b.radius)
    t = (R - a.radius) / d
    return (a.center[0] + t * (b.center[0] - a.center[0]),
            a.center[1] + t * (b.center[1] - a.center[1])), R


def merge_pair(a: Ball, b: Ball) -> Ball:
    """Merged ball: radius the sum of radii, centred to contain both."""
    c, _ = enclose_two(a, b)
    return Ball(c, a.radius + b.radius, a.degree + b.degree, compact=a.compact and b.compact)


def merge_until_disjoint(balls, on_merge=None) -> list:
    """Repeatedly merge the first meeting pair (index order) until disjoint."""
    balls = list(balls)
    while True:
        hit = None
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                if balls[i].meets(balls[j]):
                    hit = (i, j)
                    break
            if hit:
                break
        if hit is None:
            return balls
        i, j = hit
        m = merge_pair(balls[i], balls[j])
        if on_merge is not None:
            on_merge(balls[i], balls[j], m)
        balls[i] = m
        del balls[j]


def enclosing_circle(xs, ys):
    """Minimal enclosing circle of a point set (Welzl, deterministic order)."""
    pts = np.column_stack([xs, ys]).astype(float)
    pts = np.unique(pts, axis=0)
    if len(pts) > 3:
        try:
            from scipy.spatial import ConvexHull

            pts = pts[ConvexHull(pts).vertices]
        except Exception:  # collinear or tiny sets: keep all points
            pass
    rng = np.random.default_rng(0)
    pts = pts[rng.permutation(len(pts))]

    def circ2(a, b):
        c = (a + b) / 2
        return c, float(np.linalg.norm(a - c))

    def circ3(a, b, c):
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-300:
            cands = [circ2(a, b), circ2(a, c), circ2(b, c)]
            return max(cands, key=lambda t: t[1])
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        ctr = np.array([ux, uy])
        return ctr, float(np.linalg.norm(a - ctr))

    def inside(c, r, p):
        return np.linalg.norm(p - c) <= r * (1 + 1e-12) + 1e-15

    c, r = pts[0], 0.0
    for i in range(1, len(pts)):
        if inside(c, r, pts[i]):
            continue
        c, r = pts[i], 0.0
        for j in range(i):
            if inside(c, r, pts[j]):
                continue
            c, r = circ2(pts[i], pts[j])
            for k in range(j):
                if not inside(c, r, pts[k]):
                    c, r = circ3(pts[i], pts[j], pts[k])
    return (float(c[0]), float(c[1])), float(r)


def ball_in_u_eps(geometry: GridGeometry, dist: np.ndarray, ball: Ball, eps: float) -> bool:
    """Closed ball inside U_eps, judged from the centre's distance to U^c."""
    return point_distance(geometry, dist, ball.center) - ball.radius > eps


def total_energy(u: ComplexGrid, a: VectorGrid, region=None) -> float:
    return energy_density(u, a).integrate(region)


def initial_cover(u: ComplexGrid, a: VectorGrid, region=None, constants: Constants = DEFAULT,
                  comps: ComponentSet | None = None, e: ScalarGrid | None = None,
                  strict: bool = False) -> BallFamily:
    """Disjoint balls of radius >= eps covering S_E ∩ U_eps.

    Each S_E component gets its minimal enclosing disc enlarged by one grid
    spacing (radius at least eps); overlapping seeds are merged into balls of
    summed radius. Every ball is checked against e(U ∩ B) >= c1 r / eps.
    """
    g = u.geometry
    eps = u.epsilon
    region = g.mask if region is None else np.asarray(region, bool) & g.mask
    if comps is None:
        comps = sublevel_components(u, region)
    if e is None:
        e = energy_density(u, a)
    G = e.integrate(region)
    beta_eff = math.log(max(G, 1.0)) / abs(math.log(eps))
    if strict and beta_eff >= constants.beta:
        raise ValueError(f"energy bound fails: G = {G:.4g} > eps^-beta")
    X, Y = g.coords
    seeds = []
    for k in comps.essential:
        idx = comps.components[k]
        c, r = enclosing_circle(X.ravel()[idx], Y.ravel()[idx])
        seeds.append(Ball(c, max(eps, r + g.spacing), comps.degree[k]))
    balls = merge_until_disjoint(seeds)
    fam = BallFamily(tuple(balls), {"beta_eff": beta_eff, "G": G}).with_energies(e, region)
    for b in fam:
        ratio = b.energy * eps / b.radius
        if ratio < constants.c1:
            raise CoverEnergyError(
                f"seed ball at {b.center} has e*eps/r = {ratio:.3g} < c1 = {constants.c1:.3g}")
    return fam
