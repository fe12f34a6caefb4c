"""Discrete order parameter / gauge fields and their derived densities.

Conventions
-----------
Arrays have shape ``(nx, ny)`` with the first index along x:
node ``(i, j)`` sits at ``origin + (i*h, j*h)``. Each node owns the square
cell of side ``h`` centred on it; quadrature is the sum of node values times
``h**2`` (exact disc/cell overlap fractions where a disc is involved).

Derivatives live on grid edges. On an edge between two in-mask neighbours

    D u = (u_{k+1} - u_k)/h - i A_mid u_mid,

a centred difference located at the edge midpoint. Node quantities average
the available adjacent edges, so interior nodes see the centred stencil and
nodes on the mask boundary fall back to the single one-sided edge. The edge
current Im(conj(u_mid) D u) then satisfies 2e >= |j|^2 at every node when
|u| <= 1.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import kernels

KINDS = ("complex", "vector2", "scalar")


class GeometryMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridGeometry:
    """Uniform square grid with an in-domain node mask."""

    nx: int
    ny: int
    spacing: float
    origin: tuple = (0.0, 0.0)
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid needs at least 4 nodes per side")
        m = np.ones((self.nx, self.ny), bool) if self.mask is None else np.asarray(self.mask, bool)
        if m.shape != (self.nx, self.ny):
            raise ValueError(f"mask shape {m.shape} != ({self.nx}, {self.ny})")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "spacing", float(self.spacing))
        if not m.any():
            raise ValueError("mask is empty")
        if kernels.label4(m)[1] != 1:
            raise ValueError("masked-in nodes must form one 4-connected set")

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float], spacing: float, mask_fn=None):
        """Grid whose nodes span ``[lo, hi]`` (rounded to whole cells)."""
        nx = int(round((hi[0] - lo[0]) / spacing)) + 1
        ny = int(round((hi[1] - lo[1]) / spacing)) + 1
        geom = cls(nx, ny, spacing, tuple(lo))
        if mask_fn is not None:
            X, Y = geom.coords
            geom = cls(nx, ny, spacing, tuple(lo), mask_fn(X, Y))
        return geom

    @classmethod
    def square(cls, half_width: float, n: int):
        """``n x n`` nodes over ``[-half_width, half_width]^2``."""
        h = 2 * half_width / (n - 1)
        return cls(n, n, h, (-half_width, -half_width))

    # -- coordinates -------------------------------------------------------
    @cached_property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.spacing * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.spacing * np.arange(self.ny)

    @cached_property
    def coords(self):
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        X.setflags(write=False)
        Y.setflags(write=False)
        return X, Y

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    def point(self, i: int, j: int):
        return (self.origin[0] + i * self.spacing, self.origin[1] + j * self.spacing)

    def nearest_node(self, p) -> tuple[int, int]:
        i = int(round((p[0] - self.origin[0]) / self.spacing))
        j = int(round((p[1] - self.origin[1]) / self.spacing))
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)

    def flat(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    def same_as(self, other: "GridGeometry") -> bool:
        return self is other or (
            self.nx == other.nx and self.ny == other.ny and self.spacing == other.spacing
            and self.origin == other.origin and np.array_equal(self.mask, other.mask)
        )

    def with_mask(self, mask) -> "GridGeometry":
        return GridGeometry(self.nx, self.ny, self.spacing, self.origin, mask)

    # -- metric helpers ----------------------------------------------------
    @cached_property
    def dist_to_complement(self) -> np.ndarray:
        """Euclidean distance from each node to the complement of the domain.

        The domain is the union of the node cells' centres joined up to the
        outermost nodes, so boundary nodes sit at distance 0.
        """
        d = mask_distance(self.mask, self.spacing)
        d.setflags(write=False)
        return d

    def disc_fraction(self, center, radius: float):
        """Overlap fractions of node cells with a closed disc.

        Returns ``(sx, sy, w)``: slices into the node arrays and the fraction
        of each covered cell lying inside the disc (no mask applied).
        """
        h = self.spacing
        cx, cy = center
        i0 = max(int(math.floor((cx - radius - self.origin[0]) / h - 0.5)), 0)
        i1 = min(int(math.ceil((cx + radius - self.origin[0]) / h + 0.5)), self.nx - 1)
        j0 = max(int(math.floor((cy - radius - self.origin[1]) / h - 0.5)), 0)
        j1 = min(int(math.ceil((cy + radius - self.origin[1]) / h + 0.5)), self.ny - 1)
        if i1 < i0 or j1 < j0:
            return slice(0, 0), slice(0, 0), np.zeros((0, 0))
        xs = self.x[i0:i1 + 1] - cx
        ys = self.y[j0:j1 + 1] - cy
        w = rect_disc_area(xs[:, None] - h / 2, xs[:, None] + h / 2,
                           ys[None, :] - h / 2, ys[None, :] + h / 2, radius) / h**2
        return slice(i0, i1 + 1), slice(j0, j1 + 1), np.clip(w, 0.0, 1.0)

    def disc_nodes(self, center, radius: float) -> np.ndarray:
        """Boolean array of nodes within the closed disc."""
        X, Y = self.coords
        return (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius**2 * (1 + 1e-12)


def mask_distance(mask: np.ndarray, spacing: float) -> np.ndarray:
    """Distance to the complement of ``mask``, with the grid exterior outside."""
    padded = np.pad(np.asarray(mask, bool), 1, constant_values=False)
    edt = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return np.where(mask, spacing * (edt - 1.0), 0.0)


# -- exact rectangle / disc overlap ------------------------------------------
def _sqrt_primitive(x, R):
    return 0.5 * (x * np.sqrt(np.maximum(R * R - x * x, 0.0)) + R * R * np.arcsin(np.clip(x / R, -1, 1)))


def _min_primitive(c, x, R):
    """∫_0^x min(c, sqrt(R² - t²)) dt for c >= 0 (odd in x, flat beyond R)."""
    ax = np.minimum(np.abs(x), R)
    xc = np.sqrt(np.maximum(R * R - c * c, 0.0))
    val = np.where(ax <= xc, c * ax, c * xc + _sqrt_primitive(ax, R) - _sqrt_primitive(xc, R))
    return np.sign(x) * val


def rect_disc_area(x0, x1, y0, y1, R):
    """Area of ``[x0,x1] x [y0,y1]`` inside the disc of radius R at the origin.

    Writes the chord length at abscissa t as W(y1, t) - W(y0, t) with
    W(c, t) = sign(c) min(|c|, sqrt(R² - t²)) and integrates in closed form.
    """
    def strip(c):
        ac = np.abs(c)
        return np.sign(c) * (_min_primitive(ac, x1, R) - _min_primitive(ac, x0, R))

    return np.maximum(strip(y1) - strip(y0), 0.0)


# -- field containers --------------------------------------------------------
def _freeze(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ComplexGrid:
    geometry: GridGeometry
    values: np.ndarray
    epsilon: float

    def __post_init__(self):
        v = _freeze(np.asarray(self.values, dtype=np.complex128))
        if v.shape != self.geometry.shape:
            raise GeometryMismatch("values do not match the geometry")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite order parameter")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        object.__setattr__(self, "values", v)

    @cached_property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def check_unit_bound(self, tol: float = 1e-12) -> None:
        """Raise unless |u| <= 1 on the mask (asserted, never clamped)."""
        worst = float(self.modulus[self.geometry.mask].max())
        if worst > 1 + tol:
            raise ValueError(f"|u| reaches {worst:.6g} > 1")


@dataclass(frozen=True, eq=False)
class VectorGrid:
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(np.asarray(self.values, dtype=np.float64))
        if v.shape != self.geometry.shape + (2,):
            raise GeometryMismatch("vector values must have shape (nx, ny, 2)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vector field")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, geometry: GridGeometry) -> "VectorGrid":
        return cls(geometry, np.zeros(geometry.shape + (2,)))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.values[..., 0], self.values[..., 1])


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(np.asarray(self.values, dtype=np.float64))
        if v.shape != self.geometry.shape:
            raise GeometryMismatch("scalar values do not match the geometry")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite scalar field")
        object.__setattr__(self, "values", v)

    def integrate(self, region=None) -> float:
        """Sum over in-mask nodes (optionally weighted/masked by ``region``) times h²."""
        w = self.geometry.mask.astype(float)
        if region is not None:
            w = w * region
        return float(np.sum(self.values * w) * self.geometry.cell_area)

    def integrate_disc(self, center, radius: float, region=None) -> float:
        g = self.geometry
        sx, sy, w = g.disc_fraction(center, radius)
        w = w * g.mask[sx, sy]
        if region is not None:
            w = w * region[sx, sy]
        return float(np.sum(self.values[sx, sy] * w) * g.cell_area)


def _check_pair(u: ComplexGrid, a: VectorGrid):
    if not u.geometry.same_as(a.geometry):
        raise GeometryMismatch("u and A live on different grids")


# -- stencils -----------------------------------------------------------------
def _edge_to_node(q, ok, axis):
    """Average edge values onto nodes; edges with ``ok`` False are skipped."""
    qz = np.where(ok, q, 0.0)
    cnt = ok.astype(float)
    shape = list(q.shape)
    shape[axis] += 1
    s = np.zeros(shape)
    c = np.zeros(shape)
    lo = [slice(None)] * q.ndim
    hi = [slice(None)] * q.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    s[tuple(lo)] += qz
    s[tuple(hi)] += qz
    c[tuple(lo)] += cnt
    c[tuple(hi)] += cnt
    return np.where(c > 0, s / np.maximum(c, 1.0), 0.0)


def _edges(u, A, h, mask, axis):
    sl0 = [slice(None)] * 2
    sl1 = [slice(None)] * 2
    sl0[axis] = slice(0, -1)
    sl1[axis] = slice(1, None)
    sl0, sl1 = tuple(sl0), tuple(sl1)
    ok = mask[sl0] & mask[sl1]
    um = 0.5 * (u[sl0] + u[sl1])
    am = 0.5 * (A[..., axis][sl0] + A[..., axis][sl1])
    D = (u[sl1] - u[sl0]) / h - 1j * am * um
    return ok, um, D


def node_gradient(q: np.ndarray, mask: np.ndarray, h: float):
    """Centred node gradient of a real node field, one-sided at the mask edge."""
    out = []
    for axis in (0, 1):
        sl0 = [slice(None)] * 2
        sl1 = [slice(None)] * 2
        sl0[axis] = slice(0, -1)
        sl1[axis] = slice(1, None)
        ok = mask[tuple(sl0)] & mask[tuple(sl1)]
        out.append(_edge_to_node((q[tuple(sl1)] - q[tuple(sl0)]) / h, ok, axis))
    return out


def energy_terms(u: ComplexGrid, a: VectorGrid) -> dict:
    """Node densities of the three energy terms (kinetic, field, potential)."""
    _check_pair(u, a)
    g = u.geometry
    h, m = g.spacing, g.mask
    kin = np.zeros(g.shape)
    for axis in (0, 1):
        ok, _, D = _edges(u.values, a.values, h, m, axis)
        kin += _edge_to_node(np.abs(D) ** 2, ok, axis)
    dAy_dx, _ = node_gradient(a.values[..., 1], m, h)
    _, dAx_dy = node_gradient(a.values[..., 0], m, h)
    curl_a = dAy_dx - dAx_dy
    pot = (1 - np.abs(u.values) ** 2) ** 2 / (2 * u.epsilon**2)
    zero = ~m
    for arr in (kin, curl_a, pot):
        arr[zero] = 0.0
    return {"kinetic": 0.5 * kin, "field": 0.5 * curl_a**2, "potential": 0.5 * pot, "curl_a": curl_a}


def energy_density(u: ComplexGrid, a: VectorGrid) -> ScalarGrid:
    """e = ½(|∇_A u|² + (curl A)² + (1-|u|²)²/(2ε²)) per node, zero off the mask."""
    t = energy_terms(u, a)
    return ScalarGrid(u.geometry, t["kinetic"] + t["field"] + t["potential"])


def field_strength(a: VectorGrid) -> ScalarGrid:
    g = a.geometry
    dAy_dx, _ = node_gradient(a.values[..., 1], g.mask, g.spacing)
    _, dAx_dy = node_gradient(a.values[..., 0], g.mask, g.spacing)
    return ScalarGrid(g, np.where(g.mask, dAy_dx - dAx_dy, 0.0))


def current(u: ComplexGrid, a: VectorGrid) -> VectorGrid:
    """j = (iu, ∇_A u) = Im(conj(u) ∇_A u), on edges then averaged to nodes."""
    _check_pair(u, a)
    g = u.geometry
    comps = []
    for axis in (0, 1):
        ok, um, D = _edges(u.values, a.values, g.spacing, g.mask, axis)
        comps.append(_edge_to_node(np.imag(np.conj(um) * D), ok, axis))
    j = np.stack(comps, axis=-1)
    j[~g.mask] = 0.0
    return VectorGrid(g, j)


def vorticity(u: ComplexGrid, a: VectorGrid) -> ScalarGrid:
    """μ = curl j + curl A with centred node differences."""
    j = current(u, a).values
    g = u.geometry
    djy_dx, _ = node_gradient(j[..., 1], g.mask, g.spacing)
    _, djx_dy = node_gradient(j[..., 0], g.mask, g.spacing)
    mu = djy_dx - djx_dy + field_strength(a).values
    return ScalarGrid(g, np.where(g.mask, mu, 0.0))


# -- synthesis ----------------------------------------------------------------
@dataclass(frozen=True)
class Scenario:
    """Test-configuration recipe.

    kind: ``single-vortex``, ``multi-vortex``, ``lattice`` or ``uniform``.
    ``vortices`` lists ``((x, y), degree)``; for ``lattice`` it is generated
    from ``spacing`` and ``shape`` (centred on ``center``).
    """

    kind: str
    epsilon: float
    vortices: tuple = ()
    value: complex = 1.0
    spacing: float = 0.0
    shape: tuple = (0, 0)
    center: tuple = (0.0, 0.0)
    gauge: str = "zero"
    h0: float = 0.0
    allow_core_overlap: bool = False

    def points(self) -> list:
        if self.kind == "uniform":
            return []
        if self.kind == "lattice":
            return lattice_vortices(self.spacing, self.shape, self.center)
        if self.kind == "single-vortex" and len(self.vortices) != 1:
            raise ValueError("single-vortex needs exactly one vortex")
        return [((float(p[0]), float(p[1])), int(d)) for p, d in self.vortices]


def lattice_vortices(spacing: float, shape, center=(0.0, 0.0), degree: int = 1) -> list:
    nx, ny = shape
    xs = center[0] + spacing * (np.arange(nx) - (nx - 1) / 2)
    ys = center[1] + spacing * (np.arange(ny) - (ny - 1) / 2)
    return [((float(x), float(y)), degree) for x in xs for y in ys]


def synthesize(scn: Scenario, geometry: GridGeometry, profile=None):
    """Build (u, A) for a scenario: u = Π f(|x-p|/ε)^{|d|} e^{i d θ_p}."""
    from .radial_profile import default_profile

    eps = scn.epsilon
    X, Y = geometry.coords
    pts = scn.points()
    if scn.kind == "uniform":
        u = np.full(geometry.shape, complex(scn.value))
    else:
        prof = profile or default_profile()
        dist = geometry.dist_to_complement
        for k, (p, d) in enumerate(pts):
            if not geometry.mask[geometry.nearest_node(p)] or _interp_dist(geometry, dist, p) < 2 * eps:
                raise ValueError(f"vortex {k} at {p} lies within 2ε of the mask boundary")
            for q, _ in pts[:k]:
                if math.dist(p, q) < 4 * eps and not scn.allow_core_overlap:
                    raise ValueError(f"vortex centres {q} and {p} are closer than 4ε")
        u = np.ones(geometry.shape, dtype=np.complex128)
        for p, d in pts:
            dx, dy = X - p[0], Y - p[1]
            r = np.hypot(dx, dy)
            mod = prof(r / eps) ** abs(d)
            u *= mod * np.exp(1j * d * np.arctan2(dy, dx))
    u = np.where(geometry.mask, u, 0.0)
    if scn.gauge == "zero":
        A = np.zeros(geometry.shape + (2,))
    elif scn.gauge == "constant-field":
        A = 0.5 * scn.h0 * np.stack([-Y, X], axis=-1)
    else:
        raise ValueError(f"unknown gauge {scn.gauge!r}")
    ug = ComplexGrid(geometry, u, eps)
    ug.check_unit_bound()
    return ug, VectorGrid(geometry, A)


def _interp_dist(geometry: GridGeometry, dist: np.ndarray, p) -> float:
    """Distance to the complement at an off-node point (bilinear)."""
    return float(bilinear(geometry, dist, np.array([p[0]]), np.array([p[1]]))[0])


def bilinear(geometry: GridGeometry, values: np.ndarray, xs, ys):
    """Bilinear interpolation of node values at points (clamped to the grid)."""
    h = geometry.spacing
    fx = np.clip((np.asarray(xs) - geometry.origin[0]) / h, 0, geometry.nx - 1 - 1e-12)
    fy = np.clip((np.asarray(ys) - geometry.origin[1]) / h, 0, geometry.ny - 1 - 1e-12)
    i = np.floor(fx).astype(int)
    j = np.floor(fy).astype(int)
    tx, ty = fx - i, fy - j
    v = values
    return ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i + 1, j]
            + (1 - tx) * ty * v[i, j + 1] + tx * ty * v[i + 1, j + 1])


# -- GLF1 I/O -----------------------------------------------------------------
def write_glf1(target, field, epsilon: float | None = None) -> None:
    """Write a ComplexGrid, VectorGrid or ScalarGrid in GLF1 format."""
    if isinstance(field, ComplexGrid):
        kind, data, eps = "complex", field.values.view(np.float64), field.epsilon
    elif isinstance(field, VectorGrid):
        kind, data, eps = "vector2", field.values, epsilon
    elif isinstance(field, ScalarGrid):
        kind, data, eps = "scalar", field.values, epsilon
    else:
        raise TypeError(f"cannot serialize {type(field).__name__}")
    g = field.geometry
    header = (
        "GLF1\n"
        f"nx {g.nx}\n"
        f"ny {g.ny}\n"
        f"spacing {float(g.spacing).hex()}\n"
        f"origin {float(g.origin[0]).hex()} {float(g.origin[1]).hex()}\n"
        f"epsilon {'none' if eps is None else float(eps).hex()}\n"
        f"kind {kind}\n"
        "data\n"
    ).encode("ascii")
    payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    mask = np.ascontiguousarray(g.mask, dtype=np.uint8).tobytes()
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            fh.write(header + payload + mask)
    else:
        target.write(header + payload + mask)


def read_glf1(source, check_unit_bound: bool = True):
    """Read a GLF1 file; returns ``(field, epsilon)``."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    buf = io.BytesIO(raw)
    if buf.readline() != b"GLF1\n":
        raise ValueError("not a GLF1 stream")
    meta = {}
    while True:
        line = buf.readline()
        if not line:
            raise ValueError("truncated GLF1 header")
        line = line.decode("ascii").strip()
        if line == "data":
            break
        key, _, val = line.partition(" ")
        meta[key] = val
    nx, ny = int(meta["nx"]), int(meta["ny"])
    spacing = float.fromhex(meta["spacing"])
    ox, oy = (float.fromhex(t) for t in meta["origin"].split())
    eps = None if meta["epsilon"] == "none" else float.fromhex(meta["epsilon"])
    kind = meta["kind"]
    if kind not in KINDS:
        raise ValueError(f"unknown GLF1 kind {kind!r}")
    per = 1 if kind == "scalar" else 2
    nbytes = nx * ny * per * 8
    body = buf.read(nbytes)
    mask_raw = buf.read(nx * ny)
    if len(body) != nbytes or len(mask_raw) != nx * ny:
        raise ValueError("truncated GLF1 payload")
    data = np.frombuffer(body, dtype="<f8").astype(np.float64)
    mask = np.frombuffer(mask_raw, dtype=np.uint8).reshape(nx, ny).astype(bool)
    geom = GridGeometry(nx, ny, spacing, (ox, oy), mask)
    if kind == "complex":
        vals = data.reshape(nx, ny, 2)
        f = ComplexGrid(geom, vals[..., 0] + 1j * vals[..., 1], eps)
        if check_unit_bound:
            f.check_unit_bound()
    elif kind == "vector2":
        f = VectorGrid(geom, data.reshape(nx, ny, 2))
    else:
        f = ScalarGrid(geom, data.reshape(nx, ny))
    return f, eps

