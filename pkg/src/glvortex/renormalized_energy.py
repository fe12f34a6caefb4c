"""Renormalized energy of point configurations.

Currents are exact: j = ∇⊥H with ΔH = 2π Σ d_p δ_p − h, where
∇⊥ = (−∂_y, ∂_x), so curl j = ν − h. Periodic configurations use an Ewald
split of the log kernel. The window energy is evaluated by polar
Gauss-Legendre quadrature (log-mapped radius) on discs around the points
and exact-overlap cell quadrature elsewhere.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

from .constants import GAMMA
from .grid_field import GridGeometry, VectorGrid, rect_disc_area


# -- configurations -----------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """Points with degrees and a constant neutralizing background h.

    With ``periodic`` the points form one fundamental cell spanned by the rows
    of ``cell``; h defaults to the neutral value 2π Σd / |cell| then.
    """

    points: np.ndarray
    h: float | None = 0.0
    degrees: np.ndarray | None = None
    periodic: bool = False
    cell: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, float).reshape(-1, 2)
        object.__setattr__(self, "points", p)
        d = np.ones(len(p), np.int64) if self.degrees is None else np.asarray(self.degrees, np.int64)
        if d.shape != (len(p),):
            raise ValueError("one degree per point")
        object.__setattr__(self, "degrees", d)
        for i in range(len(p)):
            for k in range(i):
                if np.allclose(p[i], p[k]):
                    raise ValueError("points must be distinct")
        if self.periodic:
            if self.cell is None:
                raise ValueError("periodic configuration needs a cell")
            c = np.asarray(self.cell, float).reshape(2, 2)
            object.__setattr__(self, "cell", c)
            if self.h is None:
                object.__setattr__(self, "h", 2 * np.pi * d.sum() / self.area)
        elif self.h is None:
            object.__setattr__(self, "h", 0.0)

    @property
    def area(self) -> float:
        return float(abs(np.linalg.det(self.cell)))

    @classmethod
    def lattice(cls, kind: str, density: float = 1.0) -> "PointConfiguration":
        """Unit-degree Bravais lattice (square or triangular) at given density."""
        if kind == "square":
            a = 1 / math.sqrt(density)
            cell = np.array([[a, 0.0], [0.0, a]])
        elif kind == "triangular":
            a = math.sqrt(2 / (math.sqrt(3) * density))
            cell = np.array([[a, 0.0], [a / 2, a * math.sqrt(3) / 2]])
        else:
            raise ValueError(f"unknown lattice {kind!r}")
        return cls(np.zeros((1, 2)), None, None, True, cell)

    @classmethod
    def from_json(cls, text: str) -> "PointConfiguration":
        d = json.loads(text)
        return cls(np.array(d["points"], float), d.get("h", 0.0), d.get("degrees"),
                   bool(d.get("periodic", False)), d.get("cell"))

    def to_json(self) -> str:
        return json.dumps({"points": self.points.tolist(), "h": self.h,
                           "degrees": self.degrees.tolist(), "periodic": self.periodic,
                           "cell": None if self.cell is None else self.cell.tolist()}, sort_keys=True)

    def min_separation(self) -> float:
        pts = self.points_in_box(np.array([-3.0, -3.0]), np.array([3.0, 3.0])) if self.periodic else self.points
        if len(pts) < 2:
            return math.inf
        d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
        d[np.diag_indices(len(pts))] = np.inf
        return float(d.min())

    def points_in_box(self, lo, hi):
        """All points (periodic images included) inside the box [lo, hi]."""
        return self.images_in_box(lo, hi)[0]

    def images_in_box(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        if not self.periodic:
            keep = np.all((self.points >= lo) & (self.points <= hi), axis=1)
            return self.points[keep], self.degrees[keep]
        inv = np.linalg.inv(self.cell.T)
        corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
        uv = corners @ inv.T
        n0 = np.floor(uv.min(axis=0)) - 2
        n1 = np.ceil(uv.max(axis=0)) + 2
        ii, jj = np.meshgrid(np.arange(n0[0], n1[0] + 1), np.arange(n0[1], n1[1] + 1), indexing="ij")
        shifts = np.stack([ii.ravel(), jj.ravel()], 1) @ self.cell
        pts = (self.points[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
        deg = np.tile(self.degrees, len(shifts))
        keep = np.all((pts >= lo) & (pts <= hi), axis=1)
        return pts[keep], deg[keep]


# -- cutoffs ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CutoffFamily:
    """χ_{U_R}: 1 at depth >= width inside U_R, C¹ ramp to 0 at ∂U_R.

    The ramp is the smoothstep 3t² − 2t³ of t = depth/width, so
    |∇χ| <= 1.5/width.
    """

    shape: str
    R: float
    width: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.shape not in ("ball", "square"):
            raise ValueError("shape must be 'ball' or 'square'")
        if not 0 < self.width <= self.R:
            raise ValueError("need 0 < width <= R")

    @property
    def gradient_bound(self) -> float:
        return 1.5 / self.width

    @property
    def area(self) -> float:
        return math.pi * self.R**2 if self.shape == "ball" else (2 * self.R) ** 2

    def depth(self, x, y):
        x = np.asarray(x, float) - self.center[0]
        y = np.asarray(y, float) - self.center[1]
        if self.shape == "ball":
            return self.R - np.hypot(x, y)
        return self.R - np.maximum(np.abs(x), np.abs(y))

    def __call__(self, x, y):
        t = np.clip(self.depth(x, y) / self.width, 0.0, 1.0)
        return t * t * (3 - 2 * t)

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.R, c + self.R


# -- currents ---------------------------------------------------------------------------
def _ewald_eta(cell) -> float:
    return math.sqrt(math.pi / abs(np.linalg.det(cell)))


def _ewald_grad(cell, dx, dy, eta=None, tol=1e-13):
    """∇H for the periodic kernel with ΔH = 2π(Σ_L δ_L − 1/|cell|)."""
    cell = np.asarray(cell, float)
    V = abs(np.linalg.det(cell))
    eta = eta or _ewald_eta(cell)
    # reduce to the nearest image first
    inv = np.linalg.inv(cell.T)
    uv = np.stack([dx, dy], -1) @ inv.T
    uv -= np.round(uv)
    r = uv @ cell
    rx, ry = r[..., 0], r[..., 1]
    gx = np.zeros_like(rx)
    gy = np.zeros_like(rx)
    lmax = int(math.ceil(math.sqrt(-math.log(tol)) / eta / min(np.linalg.norm(cell, axis=1)))) + 1
    for i in range(-lmax, lmax + 1):
        for j in range(-lmax, lmax + 1):
            L = i * cell[0] + j * cell[1]
            qx, qy = rx + L[0], ry + L[1]
            r2 = qx * qx + qy * qy
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.exp(-eta * eta * r2) / r2
            gx += qx * w
            gy += qy * w
    rec = 2 * np.pi * np.linalg.inv(cell).T  # reciprocal basis rows
    kmax = int(math.ceil(2 * eta * math.sqrt(-math.log(tol)) / min(np.linalg.norm(rec, axis=1)))) + 1
    for i in range(-kmax, kmax + 1):
        for j in range(-kmax, kmax + 1):
            if i == 0 and j == 0:
                continue
            k = i * rec[0] + j * rec[1]
            k2 = k @ k
            c = 2 * np.pi / V * math.exp(-k2 / (4 * eta * eta)) / k2
            s = np.sin(k[0] * rx + k[1] * ry)
            gx += c * k[0] * s
            gy += c * k[1] * s
    return gx, gy


def ewald_regular_part(cell, eta=None, tol=1e-14) -> float:
    """Regular part at 0 of the mean-zero periodic H (H − log|x| as x → 0)."""
    cell = np.asarray(cell, float)
    V = abs(np.linalg.det(cell))
    eta = eta or _ewald_eta(cell)
    val = 0.5 * np.euler_gamma + math.log(eta) + math.pi / (2 * eta * eta * V)
    lmax = int(math.ceil(math.sqrt(-math.log(tol)) / eta / min(np.linalg.norm(cell, axis=1)))) + 2
    for i in range(-lmax, lmax + 1):
        for j in range(-lmax, lmax + 1):
            if i == 0 and j == 0:
                continue
            L = i * cell[0] + j * cell[1]
            val -= 0.5 * exp1(eta * eta * (L @ L))
    rec = 2 * np.pi * np.linalg.inv(cell).T
    kmax = int(math.ceil(2 * eta * math.sqrt(-math.log(tol)) / min(np.linalg.norm(rec, axis=1)))) + 2
    for i in range(-kmax, kmax + 1):
        for j in range(-kmax, kmax + 1):
            if i == 0 and j == 0:
                continue
            k = i * rec[0] + j * rec[1]
            k2 = k @ k
            val -= 2 * np.pi / V * math.exp(-k2 / (4 * eta * eta)) / k2
    return float(val)


def lattice_energy_ewald(config: PointConfiguration) -> float:
    """Renormalized energy per point of a one-point periodic lattice, −π R_H(0)."""
    if not config.periodic or len(config.points) != 1:
        raise ValueError("needs a one-point periodic configuration")
    return -math.pi * ewald_regular_part(config.cell)


def current_at(config: PointConfiguration, x, y):
    """(jx, jy) at arbitrary points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    jx = np.zeros(np.broadcast(x, y).shape)
    jy = np.zeros_like(jx)
    if config.periodic:
        h_neutral = 2 * np.pi * config.degrees.sum() / config.area
        for p, d in zip(config.points, config.degrees):
            gx, gy = _ewald_grad(config.cell, x - p[0], y - p[1])
            jx -= d * gy
            jy += d * gx
        dh = config.h - h_neutral
    else:
        for p, d in zip(config.points, config.degrees):
            dx, dy = x - p[0], y - p[1]
            r2 = dx * dx + dy * dy
            jx -= d * dy / r2
            jy += d * dx / r2
        dh = config.h
    if dh:
        # extra uniform background about the origin: H_bg = −dh |x|²/4
        jx += 0.5 * dh * y
        jy -= 0.5 * dh * x
    return jx, jy


def exact_current(config: PointConfiguration, grid: GridGeometry) -> VectorGrid:
    """j on the grid nodes; raises if a node coincides with a point."""
    X, Y = grid.coords
    lo = np.array([X.min(), Y.min()])
    hi = np.array([X.max(), Y.max()])
    pts = config.points_in_box(lo, hi)
    for p in pts:
        if np.any((np.abs(X - p[0]) < 1e-12) & (np.abs(Y - p[1]) < 1e-12)):
            raise ValueError(f"grid node coincides with point {tuple(p)}")
    jx, jy = current_at(config, X, Y)
    return VectorGrid(grid, np.stack([jx, jy], -1))


# -- window energy -------------------------------------------------------------------------
@dataclass
class WindowQuadrature:
    """Reusable quadrature for one configuration and window."""

    config: PointConfiguration
    chi: CutoffFamily
    spacing: float = 0.01
    n_theta: int = 96
    n_radial: int = 48
    points: np.ndarray = field(init=False)
    degrees: np.ndarray = field(init=False)
    delta: float = field(init=False)
    outer: float = field(init=False)

    def __post_init__(self):
        lo, hi = self.chi.bounds()
        pts, deg = self.config.images_in_box(lo - 1.0, hi + 1.0)
        self.points, self.degrees = pts, deg
        sep = self.config.min_separation()
        self.delta = min(0.3 * sep, 0.25) if math.isfinite(sep) else 0.25
        self.outer = self._outer_integral()

    def _outer_integral(self) -> float:
        """½∫ χ|j|² outside the discs B(p, delta), by cell quadrature with exact overlap."""
        lo, hi = self.chi.bounds()
        hq = self.spacing
        nx = int(math.ceil((hi[0] - lo[0]) / hq))
        ny = int(math.ceil((hi[1] - lo[1]) / hq))
        xs = lo[0] + hq * (np.arange(nx) + 0.5)
        ys = lo[1] + hq * (np.arange(ny) + 0.5)
        total = 0.0
        for i0 in range(0, nx, 256):
            X, Y = np.meshgrid(xs[i0:i0 + 256], ys, indexing="ij")
            w = np.full(X.shape, hq * hq)
            for p in self.points:
                near = (np.abs(X - p[0]) < self.delta + hq) & (np.abs(Y - p[1]) < self.delta + hq)
                if near.any():
                    xa, ya = X[near] - p[0], Y[near] - p[1]
                    inside = rect_disc_area(xa - hq / 2, xa + hq / 2, ya - hq / 2, ya + hq / 2, self.delta)
                    w[near] -= inside
            w = np.maximum(w, 0.0) * self.chi(X, Y)
            ok = w > 0
            jx, jy = current_at(self.config, X[ok], Y[ok])
            total += 0.5 * float(np.sum(w[ok] * (jx * jx + jy * jy)))
        return total

    def inner(self, eta: float) -> float:
        """½∫ χ|j|² over the annuli eta < |x − p| < delta, log-mapped Gauss-Legendre in r."""
        if not 0 < eta < self.delta:
            raise ValueError("eta must lie in (0, delta)")
        return _polar_inner(self.config, self.points, eta, self.delta, self.chi,
                            self.n_radial, self.n_theta)

    def bracket(self, eta: float) -> float:
        """½∫_{R²∖∪B(p,eta)} χ|j|² + π log eta Σ χ(p) d_p²."""
        chi_p = self.chi(self.points[:, 0], self.points[:, 1]) if len(self.points) else np.zeros(0)
        return self.outer + self.inner(eta) + math.pi * math.log(eta) * float(np.sum(chi_p * self.degrees**2))


@dataclass
class RenormResult:
    etas: list
    brackets: list
    extrapolated: float
    order: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["eta", "bracket", "extrapolated"])
        for e, b in zip(self.etas, self.brackets):
            w.writerow([repr(e), repr(b), repr(self.extrapolated)])
        return buf.getvalue()


def renorm_energy(config: PointConfiguration, chi: CutoffFamily, eta_sequence,
                  spacing: float = 0.01, quad: WindowQuadrature | None = None) -> RenormResult:
    """Bracket of the window energy per eta and its eta → 0 extrapolation.

    The bracket converges like eta² for smooth χ; the limit is estimated by
    Richardson extrapolation on the last two values with the measured order.
    """
    etas = [float(e) for e in eta_sequence]
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("eta values must decrease")
    quad = quad or WindowQuadrature(config, chi, spacing)
    sep = config.min_separation()
    if math.isfinite(sep) and etas[0] >= sep / 2:
        raise ValueError("eta too large: must stay below half the minimal separation")
    br = [quad.bracket(e) for e in etas]
    order = float("nan")
    ext = br[-1]
    if len(br) >= 3:
        d1, d2 = br[-2] - br[-3], br[-1] - br[-2]
        if d1 != 0 and d2 != 0 and np.sign(d1) == np.sign(d2) and abs(d2) < abs(d1):
            order = math.log(abs(d1 / d2)) / math.log(etas[-3] / etas[-2])
            q = (etas[-2] / etas[-1]) ** order
            ext = br[-1] + d2 / (q - 1)
    return RenormResult(etas, br, float(ext), order)


def _polar_inner(config, centers, eta, delta, weight=None, n_radial=48, n_theta=128):
    """½∫ weight |j|² over eta < |x − c| < delta, log-mapped Gauss-Legendre in r."""
    s, ws = np.polynomial.legendre.leggauss(n_radial)
    L = math.log(delta / eta)
    r = eta * np.exp(L * 0.5 * (s + 1))
    wr = 0.5 * ws * L * r * r      # dr = L r dt, times the polar Jacobian r
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    total = 0.0
    for c in centers:
        X = c[0] + r[:, None] * np.cos(th)
        Y = c[1] + r[:, None] * np.sin(th)
        chi = 1.0 if weight is None else weight(X, Y)
        if weight is not None and not np.any(chi > 0):
            continue
        jx, jy = current_at(config, X, Y)
        total += float(np.sum(wr[:, None] * 0.5 * chi * (jx * jx + jy * jy))) * 2 * np.pi / n_theta
    return total


def lattice_cell_energy(config: PointConfiguration, eta: float = 1e-3, spacing: float = 0.004) -> float:
    """Per-point energy ½∫_{cell∖B(p,eta)}|j|² + π log eta by direct quadrature.

    Uses the fundamental rectangle |a1| × (area/|a1|) centred on the point,
    which tiles the plane when a1 is horizontal. Independent of the closed
    Ewald form in :func:`lattice_energy_ewald`.
    """
    if not config.periodic or len(config.points) != 1:
        raise ValueError("needs a one-point periodic configuration")
    a1 = config.cell[0]
    if abs(a1[1]) > 1e-14:
        raise ValueError("first lattice vector must be horizontal")
    p = config.points[0]
    wdt = abs(a1[0])
    hgt = config.area / wdt
    delta = min(0.3 * config.min_separation(), 0.45 * min(wdt, hgt))
    nx = int(math.ceil(wdt / spacing))
    ny = int(math.ceil(hgt / spacing))
    hx, hy = wdt / nx, hgt / ny
    if abs(hx - hy) > 1e-12 * hx:
        # square sub-cells keep the overlap formula simple
        hq = min(hx, hy)
        nx, ny = int(round(wdt / hq)), int(round(hgt / hq))
        hx, hy = wdt / nx, hgt / ny
    xs = p[0] - wdt / 2 + hx * (np.arange(nx) + 0.5)
    ys = p[1] - hgt / 2 + hy * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    outer = 0.0
    for c in [p]:
        w = np.full(X.shape, hx * hy)
        near = (np.abs(X - c[0]) < delta + max(hx, hy)) & (np.abs(Y - c[1]) < delta + max(hx, hy))
        xa, ya = X[near] - c[0], Y[near] - c[1]
        w[near] -= rect_disc_area(xa - hx / 2, xa + hx / 2, ya - hy / 2, ya + hy / 2, delta)
        w = np.maximum(w, 0.0)
        ok = w > 0
        jx, jy = current_at(config, X[ok], Y[ok])
        outer = 0.5 * float(np.sum(w[ok] * (jx * jx + jy * jy)))
    return outer + _polar_inner(config, [p], eta, delta) + math.pi * math.log(eta)


def eta_log_modulus(tau: complex, terms: int = 60) -> float:
    """log(√(Im τ) |η(τ)|²) for the Dedekind eta function (q-product)."""
    q = np.exp(2j * np.pi * tau)
    val = math.log(abs(q)) / 24
    for n in range(1, terms + 1):
        val += math.log(abs(1 - q**n))
    return 0.5 * math.log(tau.imag) + 2 * val


def lattice_modulus(config: PointConfiguration) -> complex:
    a, b = config.cell
    za, zb = complex(*a), complex(*b)
    tau = zb / za
    return tau if tau.imag > 0 else -tau


# -- per-ball cost and the lower-bound right-hand side -------------------------------------
def per_ball_cost(u, a, center, eta: float, eps: float | None = None, e=None) -> tuple:
    """(lhs, rhs): ∫_{B(center, eta)} e against π|d| log(eta/eps) + C_|d|.

    C_0 = 0 and C_1 = γ; other degrees are rejected, as is a ball holding
    more than one vortex.
    """
    from .grid_field import energy_density
    from .vortex_detect import sublevel_components, winding_number

    eps = eps or u.epsilon
    g = u.geometry
    region = g.disc_nodes(center, eta) & g.mask
    comps = sublevel_components(u, region)
    if sum(1 for k in range(len(comps)) if comps.degree[k]) > 1:
        raise ValueError("more than one vortex in the ball")
    d = winding_number(u, center, eta)
    if abs(d) > 1:
        raise ValueError(f"degree {d}: C_d is only available for |d| <= 1")
    e = e if e is not None else energy_density(u, a)
    lhs = e.integrate_disc(center, eta)
    rhs = math.pi * abs(d) * math.log(eta / eps) + (GAMMA if d else 0.0)
    return lhs, rhs


def theorem2_rhs(config: PointConfiguration, chi: CutoffFamily, eta_sequence=(0.02, 0.01, 0.005),
                 spacing: float = 0.02) -> float:
    """W(j, χ)/|U_R| + ½ ⨏ h² + (γ/2π) ⨏ h for constant background h."""
    if len(config.points) == 0 and not config.h:
        return 0.0
    W = renorm_energy(config, chi, eta_sequence, spacing).extrapolated if len(config.points) else 0.0
    h = float(config.h)
    return W / chi.area + 0.5 * h * h + GAMMA / (2 * np.pi) * h
