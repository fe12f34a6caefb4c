"""Ball construction: lambda_eps, its primitive, grow-and-merge, and the
two-branch lower bound for a configuration restricted to a region U.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import DEFAULT, Constants
from .grid_field import ComplexGrid, ScalarGrid, VectorGrid, bilinear, current, energy_density, field_strength
from .vortex_detect import (
    Ball,
    BallFamily,
    ComponentSet,
    ZeroOnCircle,
    circle_samples,
    enclosing_circle,
    initial_cover,
    merge_pair,
    point_distance,
    region_distance,
    sublevel_components,
    winding_number,
)

_TOUCH = 1e-12


# -- lambda_eps and Lambda_eps -------------------------------------------------
@dataclass(frozen=True)
class LowerBoundProfile:
    epsilon: float
    c0: float = DEFAULT.c0
    c1: float = DEFAULT.c1
    c2: float = DEFAULT.c2
    C0: float = DEFAULT.C0
    c3: float = DEFAULT.c3

    def __post_init__(self):
        if not 0 < self.c2 < self.c1:
            raise ValueError("need 0 < c2 < c1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def from_constants(cls, eps: float, k: Constants = DEFAULT) -> "LowerBoundProfile":
        return cls(eps, k.c0, k.c1, k.c2, k.C0, k.c3)

    @property
    def crossover(self) -> float:
        """x* where c2/eps meets the decreasing branch (0 if it never does)."""
        eps = self.epsilon
        k = math.pi * eps / self.c0
        disc = 1 - 2 * k + 2 * math.pi * eps / self.c2
        return max(0.0, -1.0 + math.sqrt(max(disc, 0.0)))

    def check(self, n: int = 400) -> dict:
        """Sampled checks of the stated properties of Lambda_eps."""
        s = np.geomspace(self.epsilon, 0.5, n)
        L = capital_lambda(self, s)
        return {
            "increasing": bool(np.all(np.diff(L) > 0)),
            "ratio_nonincreasing": bool(np.all(np.diff(L / s) <= 1e-12 * (L / s)[:-1])),
            "log_bound_slack": float(np.min(L - (math.pi * np.log(s / self.epsilon) - self.C0))),
            "c3_slack": float(capital_lambda(self, self.epsilon) - self.c3),
        }


def lambda_eps(p: LowerBoundProfile, x):
    """min(c2/eps, (pi/x) / (1 + x/2 + pi eps/(c0 x)))."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    branch = np.pi / (x + 0.5 * x * x + np.pi * p.epsilon / p.c0)
    out = np.minimum(p.c2 / p.epsilon, branch)
    return float(out) if out.ndim == 0 else out


def _branch_primitive(p: LowerBoundProfile, x):
    # ∫ pi / (x²/2 + x + k) dx with k = pi eps / c0, written with q = 2k - 1
    q = 2 * math.pi * p.epsilon / p.c0 - 1
    if q > 0:
        sq = math.sqrt(q)
        return 2 * np.pi / sq * np.arctan((x + 1) / sq)
    if q < 0:
        a = math.sqrt(-q)
        return np.pi / a * np.log((x + 1 - a) / (x + 1 + a))
    return -2 * np.pi / (x + 1)


def capital_lambda(p: LowerBoundProfile, s):
    """Lambda_eps(s) = ∫_0^s lambda_eps in closed form.

    Linear up to the crossover x*, then the arctan/log primitive of the
    decreasing branch. Tests compare against adaptive quadrature.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    xs = p.crossover
    lin = p.c2 / p.epsilon
    tail = lin * xs + _branch_primitive(p, np.maximum(s, xs)) - _branch_primitive(p, xs)
    out = np.where(s <= xs, lin * s, tail)
    return float(out) if out.ndim == 0 else out


# -- circle lower bounds ------------------------------------------------------
def _circle_points(u, center, r):
    n = circle_samples(r, u.geometry.spacing)
    t = 2 * np.pi * np.arange(n) / n
    return center[0] + r * np.cos(t), center[1] + r * np.sin(t), t, 2 * np.pi * r / n


def circle_modulus_bound(u: ComplexGrid, center, r: float, c0: float = DEFAULT.c0):
    """(lhs, rhs) of ½∮(|∇|u||² + (1-|u|²)²/(2ε²)) >= c0 (1-m)²/ε on ∂B(center, r)."""
    g = u.geometry
    if 2 * r < u.epsilon:
        raise ValueError("need 2r >= eps")
    from .grid_field import node_gradient

    mod = u.modulus
    gx, gy = node_gradient(mod, g.mask, g.spacing)
    px, py, _, ds = _circle_points(u, center, r)
    m_s = bilinear(g, mod, px, py)
    grad2 = bilinear(g, gx, px, py) ** 2 + bilinear(g, gy, px, py) ** 2
    lhs = 0.5 * ds * float(np.sum(grad2 + (1 - m_s**2) ** 2 / (2 * u.epsilon**2)))
    m = float(m_s.min())
    return lhs, c0 * (1 - m) ** 2 / u.epsilon


def circle_phase_bound(u: ComplexGrid, a: VectorGrid, center, r: float):
    """(lhs, rhs) of the phase/field bound on ∂B(center, r).

    lhs = ½∮|u|²|∇φ - A|² + ½∫_B (curl A)², with |u|²|∇φ - A|² = |j|²/|u|²;
    rhs = π d² m² / (r (1 + m² r / 2)).
    """
    g = u.geometry
    j = current(u, a).values
    px, py, _, ds = _circle_points(u, center, r)
    m_s = np.abs(bilinear(g, u.values, px, py))
    jx = bilinear(g, j[..., 0], px, py)
    jy = bilinear(g, j[..., 1], px, py)
    line = 0.5 * ds * float(np.sum((jx**2 + jy**2) / np.maximum(m_s, 1e-300) ** 2))
    h = field_strength(a)
    area = 0.5 * ScalarGrid(g, h.values**2).integrate_disc(center, r)
    d = winding_number(u, center, r)
    m = float(m_s.min())
    return line + area, math.pi * d * d * m * m / (r * (1 + m * m * r / 2))


# -- grow and merge -------------------------------------------------------------
@dataclass
class BallCheck:
    s: float
    index: int
    radius: float
    degree: int
    energy: float
    bound: float

    @property
    def slack(self) -> float:
        return self.energy - self.bound

    def status(self, margin: float) -> str:
        if self.slack >= 0:
            return "pass"
        return "flag" if self.energy >= (1 - margin) * self.bound else "fail"


@dataclass
class GrowthTrace:
    """Event log of the grow-and-merge process.

    ``snapshots`` hold (s, balls, growing flags) right after each event;
    between events growing balls follow r = s |d|.
    """

    epsilon: float
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    margin: float = DEFAULT.quad_margin

    @property
    def final(self) -> BallFamily:
        return BallFamily(tuple(self.snapshots[-1][1]))

    @property
    def s_final(self) -> float:
        return self.snapshots[-1][0]

    def family_at(self, s: float) -> BallFamily:
        k = 0
        for i, (si, _, _) in enumerate(self.snapshots):
            if si <= s:
                k = i
        s0, balls, growing = self.snapshots[k]
        out = []
        for b, gr in zip(balls, growing):
            if gr and s > s0:
                b = replace(b, radius=max(b.radius, s * abs(b.degree)))
            out.append(b)
        return BallFamily(tuple(out))

    def total_radius(self, s: float) -> float:
        return self.family_at(s).total_radius

    def worst_status(self) -> str:
        st = {c.status(self.margin) for c in self.checks}
        return "fail" if "fail" in st else ("flag" if "flag" in st else "pass")

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(ev, sort_keys=True) for ev in self.events)


def _ball_dict(b: Ball) -> dict:
    return {"cx": b.center[0], "cy": b.center[1], "r": b.radius, "degree": b.degree,
            "compact": b.compact}


class _Grower:
    def __init__(self, u, e, region, dist, prof, margin, trace):
        self.u, self.e, self.region, self.dist = u, e, region, dist
        self.g = u.geometry
        self.eps = u.epsilon
        self.prof = prof
        self.trace = trace
        self.margin = margin

    def inside(self, b: Ball) -> bool:
        return point_distance(self.g, self.dist, b.center) - b.radius > self.eps

    def leave_s(self, b: Ball) -> float:
        return (point_distance(self.g, self.dist, b.center) - self.eps) / abs(b.degree)

    def energy(self, b: Ball) -> float:
        return self.e.integrate_disc(b.center, b.radius, self.region)

    def check(self, s, balls):
        ratio = capital_lambda(self.prof, s) / s
        for i, b in enumerate(balls):
            self.trace.checks.append(BallCheck(s, i, b.radius, b.degree, self.energy(b), b.radius * ratio))


def grow_and_merge(seed: BallFamily, u: ComplexGrid, a: VectorGrid | None = None, s_target: float = 0.49,
                   region=None, constants: Constants = DEFAULT, e: ScalarGrid | None = None,
                   stop_total: float | None = None, check: bool = True) -> GrowthTrace:
    """Event-driven growth of the seed balls with exact contact times.

    Balls inside U_eps with nonzero degree grow as r = s|d| once s reaches
    r/|d|; touching balls merge into one of summed radius (cascading until
    disjoint). Stops at ``s_target`` or when the total radius reaches
    ``stop_total``. The item-3 energy bound is recorded at every event.
    """
    if s_target >= 0.5:
        raise ValueError("s_target must stay below 1/2")
    g = u.geometry
    eps = u.epsilon
    region = g.mask if region is None else np.asarray(region, bool) & g.mask
    if e is None:
        if a is None:
            raise ValueError("need the gauge field or a precomputed energy density")
        e = energy_density(u, a)
    dist = region_distance(g, region)
    prof = LowerBoundProfile.from_constants(eps, constants)
    trace = GrowthTrace(eps, margin=constants.quad_margin)
    G = _Grower(u, e, region, dist, prof, constants.quad_margin, trace)
    if not seed.is_disjoint():
        raise ValueError("seed family must be disjoint")
    balls = [replace(b, compact=G.inside(b)) for b in seed]
    active = [b.radius / abs(b.degree) for b in balls if b.compact and b.degree]
    s = min(min(active), s_target) if active else s_target
    growing = [False] * len(balls)

    def refresh_growing(s_now):
        for i, b in enumerate(balls):
            growing[i] = bool(b.compact and b.degree and b.radius <= s_now * abs(b.degree) * (1 + 1e-12))

    def record(kind, s_now, before=None, after=None):
        refresh_growing(s_now)
        trace.events.append({"s": s_now, "kind": kind, "balls_before": before or [],
                             "balls_after": after or [], "total_radius": sum(b.radius for b in balls)})
        trace.snapshots.append((s_now, list(balls), list(growing)))
        if check:
            G.check(s_now, balls)

    record("start", s, after=[_ball_dict(b) for b in balls])
    for _ in range(100000):
        refresh_growing(s)
        slope = [abs(b.degree) if gr else 0 for b, gr in zip(balls, growing)]
        cand = [(s_target, "stop", None)]
        total = sum(b.radius for b in balls)
        if stop_total is not None and sum(slope) > 0:
            cand.append((s + (stop_total - total) / sum(slope), "stop-total", None))
        for i, b in enumerate(balls):
            if b.compact and b.degree and not growing[i]:
                cand.append((b.radius / abs(b.degree), "onset", i))
            if growing[i]:
                cand.append((max(G.leave_s(b), s), "leave", i))
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                sl = slope[i] + slope[j]
                if sl == 0:
                    continue
                gap = math.dist(balls[i].center, balls[j].center) - balls[i].radius - balls[j].radius
                cand.append((s + max(gap, 0.0) / sl, "contact", (i, j)))
        s_next, kind, who = min(cand, key=lambda c: (c[0], c[1]))
        s_next = max(s_next, s)
        # advance radii linearly
        balls = [replace(b, radius=b.radius + sl * (s_next - s)) if sl else b for b, sl in zip(balls, slope)]
        s = s_next
        if kind in ("stop", "stop-total"):
            record(kind, s)
            return trace
        if kind == "onset":
            record("onset", s, after=[_ball_dict(balls[who])])
            continue
        if kind == "leave":
            balls[who] = replace(balls[who], compact=False)
            record("leave", s, after=[_ball_dict(balls[who])])
            continue
        # contact: merge the pair and cascade
        before = []
        i, j = who
        pending = [(i, j)]
        while pending:
            i, j = pending.pop()
            before += [_ball_dict(balls[i]), _ball_dict(balls[j])]
            m = merge_pair(balls[i], balls[j])
            m = replace(m, compact=G.inside(m))
            if m.compact and m.degree and m.radius < s * abs(m.degree):
                trace.flags.append({"s": s, "kind": "item4-inflate", "radius": m.radius,
                                    "needed": s * abs(m.degree)})
                m = replace(m, radius=s * abs(m.degree))
            balls[i] = m
            del balls[j]
            for p in range(len(balls)):
                for q in range(p + 1, len(balls)):
                    if math.dist(balls[p].center, balls[q].center) <= balls[p].radius + balls[q].radius + _TOUCH:
                        pending = [(p, q)]
                        break
                if pending:
                    break
        record("merge", s, before=before, after=[_ball_dict(b) for b in balls])
    raise RuntimeError("grow_and_merge did not terminate")


# -- dichotomy construction ------------------------------------------------------
@dataclass
class Verdict:
    branch: int | None
    aggregate_energy: float
    aggregate_bound: float
    ball_slacks: list
    flags: dict

    @property
    def aggregate_slack(self) -> float:
        return self.aggregate_energy - self.aggregate_bound

    def to_csv_rows(self):
        rows = [("aggregate", "", "", self.aggregate_energy, self.aggregate_bound, self.aggregate_slack)]
        for k, (cx, cy, d, lhs, rhs) in enumerate(self.ball_slacks):
            rows.append((f"ball{k}", cx, cy, lhs, rhs, lhs - rhs))
        return rows


def zero_set_cover(u: ComplexGrid, comps: ComponentSet, covered: np.ndarray) -> list:
    """Balls covering the parts of S left uncovered, one per component."""
    g = u.geometry
    X, Y = g.coords
    out = []
    for idx in comps.components:
        idx = idx[~covered.ravel()[idx]]
        if idx.size == 0:
            continue
        c, r = enclosing_circle(X.ravel()[idx], Y.ravel()[idx])
        out.append(Ball(c, r + g.spacing, 0))
    return out


def construct(u: ComplexGrid, a: VectorGrid, r: float, C_bar: float, region=None,
              constants: Constants = DEFAULT, e: ScalarGrid | None = None, strict: bool = False):
    """Disjoint balls of total radius <= r covering {|u| <= 1/2} ∩ U_eps.

    Returns ``(family, verdict, trace)``. The verdict reports the aggregate
    branch e(∪B ∩ U) >= Cbar log(r/eps) and, for every ball inside U_eps,
    e(B) - π|d|(log(r/(eps Cbar)) - C); ``branch`` is 2 when all per-ball
    slacks are nonnegative, else 1 when the aggregate slack is, else None.
    """
    g = u.geometry
    eps = u.epsilon
    if not 0 < r < 0.5:
        raise ValueError("need 0 < r < 1/2")
    if C_bar < 2:
        raise ValueError("need C_bar >= 2")
    region = g.mask if region is None else np.asarray(region, bool) & g.mask
    if e is None:
        e = energy_density(u, a)
    comps = sublevel_components(u, region)
    seed = initial_cover(u, a, region, constants, comps=comps, e=e, strict=strict)
    flags = {
        "cbar_in_range": C_bar <= math.sqrt(r / eps),
        "beta_eff": seed.meta["beta_eff"],
        "beta_ok": seed.meta["beta_eff"] < constants.beta,
    }
    if strict and not flags["cbar_in_range"]:
        raise ValueError("C_bar exceeds (r/eps)^(1/2)")
    flags["seed_exceeds_half_r"] = seed.total_radius > r / 2
    if len(seed):
        # growth stops as soon as the total radius reaches r/2 (immediately if the seed is already larger)
        trace = grow_and_merge(seed, u, s_target=0.49, region=region, constants=constants, e=e,
                               stop_total=r / 2)
        bprime = list(trace.final)
    else:
        trace, bprime = None, []
    covered = BallFamily(tuple(bprime)).cover_mask(g)
    extra = zero_set_cover(u, comps, covered)
    balls = list(bprime) + extra
    merged = True
    while merged:
        merged = False
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                if balls[i].meets(balls[j]):
                    balls[i] = merge_pair(balls[i], balls[j])
                    del balls[j]
                    merged = True
                    break
            if merged:
                break
    dist = region_distance(g, region)
    balls = [replace(b, compact=point_distance(g, dist, b.center) - b.radius > eps,
                     energy=e.integrate_disc(b.center, b.radius, region)) for b in balls]
    fam = BallFamily(tuple(balls), {"beta_eff": flags["beta_eff"]})
    S = comps.union
    flags["covers_S"] = bool(np.all(fam.cover_mask(g)[S])) if S.any() else True
    flags["total_radius_ok"] = fam.total_radius <= r * (1 + 1e-12)
    flags["winding_matches"] = _winding_matches(u, fam)
    agg = float(sum(b.energy for b in fam))
    agg_bound = C_bar * math.log(r / eps)
    per = []
    for b in fam:
        if not b.compact:
            continue
        bound = math.pi * abs(b.degree) * (math.log(r / (eps * C_bar)) - constants.C_ball)
        per.append((b.center[0], b.center[1], b.degree, b.energy, bound))
    ok2 = all(l - rr >= 0 for *_, l, rr in per)
    branch = 2 if ok2 else (1 if agg >= agg_bound else None)
    return fam, Verdict(branch, agg, agg_bound, per, flags), trace


def _winding_matches(u, fam):
    for b in fam:
        if not b.compact:
            continue
        try:
            if winding_number(u, b.center, b.radius) != b.degree:
                return False
        except (ZeroOnCircle, ValueError):
            continue
    return True
