"""Orchestration from localization on the covering to the assembled g.

The Jacobian estimate is computed here as well.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import DEFAULT, Constants
from .covering_localization import (
    AtomicMeasure,
    Covering,
    assemble_f,
    build_covering,
    c_bar_alpha,
    construct_cells,
    extract_disjoint,
    lambda_alpha,
    n_alpha,
    nested_family,
    small_radius,
    vortex_measure,
)
from .grid_field import ComplexGrid, ScalarGrid, VectorGrid, energy_density, vorticity
from .mass_displacement import CellMeasures, MetricRegion, assemble_g, displace, displace_in_ball, lip_dual_norm
from .vortex_detect import BallFamily


@dataclass
class Localization:
    u: ComplexGrid
    a: VectorGrid
    e: ScalarGrid
    cov: Covering
    rho: float
    per_cell: dict
    bep: BallFamily
    small: BallFamily
    r_small: float
    nu: AtomicMeasure
    n: np.ndarray
    c_bar: dict
    lam: dict
    f: AtomicMeasure
    flags: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return self.u.epsilon


def localize(u: ComplexGrid, a: VectorGrid, constants: Constants = DEFAULT,
             e: ScalarGrid | None = None) -> Localization:
    """Covering, per-cell ball families at rho, disjoint extraction, ν, Cbar_a, Λ_a and f."""
    eps = u.epsilon
    g = u.geometry
    if e is None:
        e = energy_density(u, a)
    cov = build_covering(g, constants.ell0, eps)
    rho = constants.rho
    per_cell = construct_cells(u, a, cov, rho, e, constants)
    bep = extract_disjoint(per_cell, cov, u)
    r_small = small_radius(eps, rho)
    if r_small < rho:
        per_small = construct_cells(u, a, cov, r_small, e, constants)
        small = nested_family(bep, per_small, r_small, rho)
    else:
        small = bep
    nu = vortex_measure(small, u, cov)
    n = n_alpha(nu, len(cov))
    c_bar, lam = {}, {}
    for alpha in np.flatnonzero(n):
        alpha = int(alpha)
        cell = cov.cells[alpha]
        c_bar[alpha] = c_bar_alpha(n[alpha], e.integrate(cell.nodes), constants.M, eps)
        lam[alpha] = lambda_alpha(eps, rho, c_bar[alpha], constants, strict=False)
    flags = {
        "rho_rule": cov.rho,
        "rho_used": rho,
        "rho_exceeds_rule": rho > cov.rho,
        "r_small": r_small,
        "small_equals_large": small is bep,
        "merged_components": bep.meta.get("merged_components", 0),
        "balls_outside_cell": bep.meta.get("outside_cell", 0),
        "M_below_rule": constants.M <= 12 * cov.overlap_enlarged * math.pi,
        "lambda_negative": sorted(k for k, v in lam.items() if not v.nonneg),
        "cbar_out_of_range": sorted(k for k, v in lam.items() if not v.cbar_in_range),
    }
    return Localization(u, a, e, cov, rho, per_cell, bep, small, r_small, nu, n, c_bar, lam,
                        assemble_f(e, nu, eps), flags)


@dataclass
class GResult:
    g: np.ndarray                  # node masses
    f: np.ndarray                  # node masses of f
    cells: dict                    # alpha -> CellMeasures
    balls: list                    # BallDisplacement per atom-carrying ball
    g_plus: dict                   # alpha -> g⁺_a(A_a)
    g_minus: dict                  # alpha -> g⁻_a(A_a)
    c: dict                        # alpha -> density shift c_a
    m_prime: int
    spacing: float

    @property
    def g_density(self) -> np.ndarray:
        return self.g / self.spacing**2

    @property
    def f_density(self) -> np.ndarray:
        return self.f / self.spacing**2

    @property
    def lower_constant(self) -> float:
        """C with g >= −C (node density)."""
        return max(0.0, -float(self.g_density.min()))


def _ball_atom(nu: AtomicMeasure, mask) -> tuple:
    inside = np.flatnonzero(nu.atoms_in(mask))
    if inside.size == 0:
        return None, None
    if inside.size > 1:
        raise RuntimeError("ball carries more than one atom")
    k = int(inside[0])
    return k, int(nu.cells[k])


def build_g(loc: Localization, constants: Constants = DEFAULT) -> GResult:
    """g = f + Σ_a (g_a − f_a) with the per-cell measures described below.

    Per ball B carrying an atom of cell a: f^B = (e − Λ_a ν) 1_B and g^B its
    optimal displacement. With P = e 1_{B^c} + Σ g^B:
      g⁺_a = P 1_{A_a} / (4 m'),  g⁻_a = (½|log eps| − Λ_a)(ν_a)₊,
      f_a = Σ_{B in a} (f^B − g^B) + g⁺_a − g⁻_a.
    Interior cells: c_a = (mean density of g⁺_a − g⁻_a on A_a)₋ and g_a is
    the mass-conserving displacement of g⁺_a − g⁻_a + c_a on A_a, minus c_a.
    Boundary cells: g_a = g⁺_a.
    """
    u, e, cov, nu = loc.u, loc.e, loc.cov, loc.nu
    geo = u.geometry
    h2 = geo.cell_area
    eps = u.epsilon
    half = 0.5 * abs(math.log(eps))
    E = np.where(geo.mask, e.values * h2, 0.0)
    covered = np.zeros(geo.shape, bool)
    P = np.zeros(geo.shape)
    cell_fb = {}
    balls = []
    for b in loc.small:
        mask = b.node_mask(geo) & geo.mask
        covered |= mask
        k, alpha = _ball_atom(nu, mask)
        if k is None:
            P += np.where(mask, E, 0.0)
            continue
        lam = loc.lam[alpha].value
        bd = displace_in_ball(b.center, b.radius, e.values, nu, lam)
        balls.append(bd)
        P += bd.g
        cell_fb[alpha] = cell_fb.get(alpha, 0.0) + (bd.f - bd.g)
    P += np.where(covered, 0.0, E)
    m_prime = cov.overlap_enlarged
    out, gp, gm, cs = {}, {}, {}, {}
    ii, jj = nu.atom_nodes
    for cell in cov.cells:
        alpha = cell.index
        A = cell.enlarged
        g_plus = np.where(A, P, 0.0) / (4 * m_prime)
        g_minus = np.zeros(geo.shape)
        if loc.n[alpha] > 0:
            L = loc.lam[alpha].value
            sel = (nu.cells == alpha) & (nu.weights > 0)
            np.add.at(g_minus, (ii[sel], jj[sel]), (half - L) * nu.weights[sel])
        gt = g_plus - g_minus
        fa = gt + cell_fb.get(alpha, 0.0)
        gp[alpha] = float(g_plus.sum())
        gm[alpha] = float(g_minus.sum())
        if not cell.interior:
            ga, c, res = g_plus, 0.0, 0.0
        elif np.any(gt < 0):
            area = A.sum() * h2
            c = max(0.0, -float(gt.sum()) / area)
            shifted = gt + np.where(A, c * h2, 0.0)
            d = displace(shifted, MetricRegion.closed(geo, A))
            ga, res = d.g - np.where(A, c * h2, 0.0), d.residual
        else:
            ga, c, res = gt, 0.0, 0.0
        cs[alpha] = c
        out[alpha] = CellMeasures(alpha, fa, ga, c, res, cell.interior)
    f_nodes = loc.f.node_masses()
    g = assemble_g(loc.f, out, cov)
    return GResult(g, f_nodes, out, balls, gp, gm, cs, m_prime, geo.spacing)


def dichotomy_constants(loc: Localization, gres: GResult) -> dict:
    """Per cell with n_a > 0: g⁺(A_a)/(n_a |log eps|) and g⁺(A_a)/n_a²."""
    L = abs(math.log(loc.epsilon))
    out = {}
    for alpha in np.flatnonzero(loc.n):
        alpha = int(alpha)
        n = loc.n[alpha]
        out[alpha] = (gres.g_plus[alpha] / (n * L), gres.g_plus[alpha] / n**2)
    return out


@dataclass
class JacobianResult:
    norm: float
    G: float
    ratio: float
    gap: float
    sup_factor: float         # diameter: sup-norm bound for zero-boundary test functions


def jacobian_check(u: ComplexGrid, a: VectorGrid, nu: AtomicMeasure,
                   e: ScalarGrid | None = None) -> JacobianResult:
    """‖μ − ν‖ over test functions vanishing outside Ω with |∇ξ| <= 1,
    against √eps G where G is the total energy."""
    g = u.geometry
    if e is None:
        e = energy_density(u, a)
    mu = vorticity(u, a).values * g.cell_area
    m = np.where(g.mask, mu, 0.0) - nu.node_masses()
    region = MetricRegion(g, g.mask, ~g.mask, open_edges=True)
    res = lip_dual_norm(m, region)
    G = e.integrate()
    ratio = res.value / (math.sqrt(u.epsilon) * G) if G > 0 else 0.0
    return JacobianResult(res.value, G, ratio, res.gap, region.diameter())
