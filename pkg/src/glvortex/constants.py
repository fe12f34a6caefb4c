"""Pinned numerical constants and the configurable constants record.

Values here were produced once by the oracle runs described next to each
entry and are frozen so downstream checks have a stable reference.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

# Finite part of the degree-one radial vortex energy. Chebyshev profile at
# r_max = 80, Gauss-Legendre panels, 4-level Richardson in 1/R^2
# (extrapolation error 1.7e-9). r_max = 40 gives 1.1965759.
GAMMA = 1.1965758
GAMMA_PROVENANCE = {
    "method": "chebyshev-newton profile + 4-level Richardson in 1/R^2",
    "r_max": 80.0,
    "error_estimate": 1.7e-9,
}

# Slope of the radial profile at the origin (collocation; shooting oracle
# agrees to 7e-9).
F_PRIME_0 = 0.5831894958603

# Modulus-on-circle constant and the small-scale slope of lambda_eps.
C0_CIRCLE = 0.2
C2_SLOPE = C0_CIRCLE / 4.0

# sup over eps <= 0.05 of max_{s in [eps, 1/2]} (pi log(s/eps) - Lambda_eps(s))
# for (c0, c2) = (0.2, 0.05); the eps -> 0 limit is 11.35248. Rounded up.
C0_LAMBDA = 11.36

# Lambda_eps(eps) = c2 since eps lies below the branch crossover; pinned at c2.
C3_LAMBDA = 0.05


def ball_log_constant(C0: float = C0_LAMBDA) -> float:
    """Constant C of the per-ball bound pi|d|(log(r/(eps Cbar)) - C).

    Follows from Lambda_eps(s) >= pi log(s/eps) - C0 evaluated at
    s = pi r / (3 Cbar), with the factor 2 from stopping at total radius r/2.
    """
    return C0 / math.pi + math.log(6.0 / math.pi)


# Empirical minimum of e(B) eps / r(B) over the seed balls of the scenario
# battery (tests/test_vortex_detect.py re-measures it); c1 is half of it.
C1_MEASURED_MIN = 1.46
C1_SEED = 0.5 * C1_MEASURED_MIN


@dataclass(frozen=True)
class Constants:
    """All 'universal' constants used by the lower-bound machinery."""

    c0: float = C0_CIRCLE
    c1: float = C1_SEED
    c2: float = C2_SLOPE
    C0: float = C0_LAMBDA
    c3: float = C3_LAMBDA
    C_ball: float = ball_log_constant()
    gamma: float = GAMMA
    ell0: float = 0.1
    rho: float = 0.12
    M: float = 10.0
    beta: float = 0.25
    quad_margin: float = 0.05

    def __post_init__(self):
        if not 0 < self.c2 < self.c1:
            raise ValueError("need 0 < c2 < c1")
        if not 0 < self.ell0 < 0.125:
            raise ValueError("ell0 must satisfy 0 < ell0 < 1/8")
        if self.rho <= 0 or self.M <= 0:
            raise ValueError("rho and M must be positive")

    def with_(self, **kw) -> "Constants":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT = Constants()
