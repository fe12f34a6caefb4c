"""Degree-one radial vortex profile and the finite-part constant gamma.

The profile solves

    f'' + f'/r - f/r**2 + f (1 - f**2) = 0,    f(0) = 0,  f(inf) = 1,

which is the radial reduction of -Lap u = u (1 - |u|^2) for u = f(r) e^{i theta}.
The boundary value problem is truncated at ``r_max`` and closed with the
asymptotic tail ``f ~ 1 - 1/(2 r^2) - 9/(8 r^4) - 161/(16 r^6)``, then solved
by Newton iteration on a Chebyshev collocation grid. A shooting solver on
f'(0) is kept as the independent cross-check used by the tests.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator, CubicSpline
from scipy.optimize import brentq

# Coefficients of 1 - f in powers of r^-2 and of f' in odd powers of 1/r.
_TAIL = (0.5, 9.0 / 8.0, 161.0 / 16.0)
_TAIL_D = (1.0, 9.0 / 2.0, 483.0 / 8.0)


def tail_value(r):
    r2 = np.asarray(r, dtype=float) ** -2
    return 1.0 - r2 * (_TAIL[0] + r2 * (_TAIL[1] + r2 * _TAIL[2]))


def tail_slope(r):
    r = np.asarray(r, dtype=float)
    r2 = r**-2
    return r2 / r * (_TAIL_D[0] + r2 * (_TAIL_D[1] + r2 * _TAIL_D[2]))


def _cheb(n):
    """Chebyshev points on [-1, 1] and the first-derivative matrix."""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.r_[2.0, np.ones(n - 1), 2.0] * (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return d, x


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Sampled profile on [0, r_max] with the asymptotic tail beyond.

    ``radii`` are the Chebyshev collocation nodes in increasing order;
    ``values`` and ``slopes`` hold f and f' there.
    """

    radii: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    r_max: float
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.radii, self.values, self.slopes):
            arr.setflags(write=False)

    @cached_property
    def _interp(self):
        return BarycentricInterpolator(self.radii, self.values), BarycentricInterpolator(
            self.radii, self.slopes
        )

    @cached_property
    def _table(self):
        # dense spline table for bulk evaluation on large grids
        rr = np.linspace(0.0, self.r_max, 8001)
        f_int, d_int = self._interp
        return CubicSpline(rr, f_int(rr)), CubicSpline(rr, d_int(rr))

    def __call__(self, r, exact: bool = False):
        """Evaluate f at radii ``r`` (any shape)."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inside = r <= self.r_max
        interp = self._interp[0] if exact else self._table[0]
        out[inside] = interp(r[inside])
        out[~inside] = tail_value(r[~inside])
        out[r == 0] = 0.0
        return np.clip(out, 0.0, 1.0)

    def derivative(self, r, exact: bool = False):
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inside = r <= self.r_max
        interp = self._interp[1] if exact else self._table[1]
        out[inside] = interp(r[inside])
        out[~inside] = tail_slope(r[~inside])
        return out

    @property
    def slope_at_origin(self) -> float:
        return float(self.slopes[0])

    @property
    def saturation_radius(self) -> float:
        """Radius past which 1 - f < 1e-6 (reached through the tail)."""
        return max(self.r_max, math.sqrt(_TAIL[0] / 1e-6) * 1.01)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "f"])
            for r, f in zip(self.radii, self.values):
                w.writerow([repr(float(r)), repr(float(f))])


def solve_profile(r_max: float = 20.0, tol: float = 1e-10, n: int | None = None,
                  max_iter: int = 50) -> RadialProfile:
    """Solve the radial profile BVP by Chebyshev collocation and Newton.

    Parameters
    ----------
    r_max : truncation radius (>= 20)
    tol : bound on the collocation residual of the ODE
    n : polynomial degree; defaults to ``max(64, 3 r_max)``
    """
    if r_max < 20:
        raise ValueError("r_max must be at least 20")
    if tol > 1e-8:
        raise ValueError("tol must be at most 1e-8")
    n = int(n or max(64, math.ceil(3 * r_max)))
    d, x = _cheb(n)
    # x runs from +1 to -1; map to r in [0, r_max] with r increasing
    r = r_max * (1.0 - x) / 2.0
    d1 = -d * 2.0 / r_max
    d2 = d1 @ d1
    inner = (r > 0) & (r < r_max)
    ri = np.where(inner, r, 1.0)
    f = np.tanh(r / 1.2)
    f_end = float(tail_value(r_max))
    i0, i_end = 0, n
    step = np.inf
    for _ in range(max_iter):
        res = d2 @ f + (d1 @ f) / ri - f / ri**2 + f * (1 - f * f)
        jac = d2 + d1 / ri[:, None] - np.diag(1.0 / ri**2) + np.diag(1 - 3 * f * f)
        res[i0], res[i_end] = f[i0], f[i_end] - f_end
        jac[i0] = 0.0
        jac[i0, i0] = 1.0
        jac[i_end] = 0.0
        jac[i_end, i_end] = 1.0
        df = np.linalg.solve(jac, -res)
        f = f + df
        step = float(np.max(np.abs(df)))
        if step < 1e-12:
            break
    else:
        raise RuntimeError(f"profile Newton iteration stalled (last step {step:.2e})")
    res = d2 @ f + (d1 @ f) / ri - f / ri**2 + f * (1 - f * f)
    resid = float(np.max(np.abs(res[inner])))
    if resid > tol:
        raise RuntimeError(f"collocation residual {resid:.2e} above tol {tol:.1e}")
    slopes = d1 @ f
    if abs(f_end - f[-1]) > 10 * tol or np.any(np.diff(f) < -1e-12):
        raise RuntimeError("profile failed the asymptotic or monotonicity check")
    return RadialProfile(
        radii=r.copy(), values=f.copy(), slopes=slopes, r_max=float(r_max), residual=resid,
        meta={"method": "chebyshev-newton", "degree": n, "tol": tol},
    )


def shoot_profile(r_max: float = 12.0, rtol: float = 1e-12):
    """Shooting on a = f'(0) with an RK45/DOP853 integrator.

    Returns ``(a, sol)``; used as an independent oracle. Trajectories with the
    wrong slope either overshoot 1 or turn back down; the bracket is bisected
    on that dichotomy.
    """

    def rhs(r, y):
        f, fp = y
        return [fp, -fp / r + f / r**2 - f * (1 - f * f)]

    def classify(a):
        r0 = 1e-4
        # series start f = a r - a r^3 / 8
        y0 = [a * r0 - a * r0**3 / 8, a - 3 * a * r0**2 / 8]

        def over(r, y):
            return y[0] - 1.0

        def down(r, y):
            return y[1]

        over.terminal = down.terminal = True
        down.direction = -1
        sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=rtol, atol=1e-14,
                        events=(over, down), dense_output=True)
        if sol.t_events[0].size:
            return 1.0, sol
        if sol.t_events[1].size:
            return -1.0, sol
        return 0.0, sol

    lo, hi = 0.5, 0.7
    if classify(lo)[0] > 0 or classify(hi)[0] < 0:
        raise RuntimeError("shooting bracket does not straddle the profile slope")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s, _ = classify(mid)
        if s > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi), classify(0.5 * (lo + hi))[1]


def _gl_panels(a: float, b: float, width: float, order: int):
    n_pan = max(1, math.ceil((b - a) / width))
    edges = np.linspace(a, b, n_pan + 1)
    xg, wg = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return (mid + half * xg).ravel(), (half * wg).ravel()


def finite_part(profile: RadialProfile, R: float, width: float = 0.25, order: int = 16) -> float:
    """½∫_{B_R}(|∇u₀|² + (1-|u₀|²)²/2) - π log R for u₀ = f e^{iθ}."""
    r, w = _gl_panels(0.0, R, width, order)
    f = profile(r, exact=True)
    fp = profile.derivative(r, exact=True)
    dens = fp**2 + f**2 / r**2 + 0.5 * (1 - f * f) ** 2
    return float(math.pi * np.sum(w * dens * r) - math.pi * math.log(R))


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    error: float
    radii: tuple
    partials: tuple


def gamma_constant(profile: RadialProfile, width: float = 0.25, order: int = 16,
                   levels: int = 4) -> GammaEstimate:
    """Finite part γ by Richardson extrapolation in 1/R² over R = r_max/2^k.

    The finite part behaves like γ + π/(4R²) + O(R⁻⁴); ``levels`` radii give
    a Neville table in the variable 1/R². The error estimate is the change
    between the last two table diagonals.
    """
    radii = tuple(profile.r_max / 2.0**k for k in range(levels - 1, -1, -1))
    vals = [finite_part(profile, R, width, order) for R in radii]
    diffs = np.diff(vals)
    if np.any(diffs >= 0):
        raise ValueError("finite part is not decreasing in R; profile is suspect")
    t = np.array([R**-2 for R in radii])
    table = [list(vals)]
    for k in range(1, levels):
        prev = table[-1]
        table.append([
            (t[i] * prev[i + 1] - t[i + k] * prev[i]) / (t[i] - t[i + k])
            for i in range(len(prev) - 1)
        ])
    best = table[-1][0]
    err = abs(best - table[-2][-1]) if levels > 1 else float("nan")
    return GammaEstimate(float(best), float(err), radii, tuple(vals))


def radial_energy_profile(profile: RadialProfile, R: float, eps: float, width: float = 0.25,
                          order: int = 16) -> float:
    """Energy of f(r/eps) e^{iθ} in B_R with the eps-scaled density (exact radial quadrature)."""
    return finite_part(profile, R / eps, width, order) + math.pi * math.log(R / eps)


def profile_crossing(profile: RadialProfile, level: float = 0.5) -> float:
    """Radius where f reaches ``level``."""
    return brentq(lambda r: float(profile(np.array([r]), exact=True)[0]) - level, 1e-6, 10.0)


_DEFAULT: RadialProfile | None = None


def default_profile() -> RadialProfile:
    """Cached profile used by field synthesis."""
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = solve_profile(20.0, 1e-10)
    return _DEFAULT
