import math

import numpy as np
import pytest
from scipy.integrate import quad

from glvortex.constants import F_PRIME_0, GAMMA
from glvortex.radial_profile import (
    default_profile,
    finite_part,
    gamma_constant,
    profile_crossing,
    shoot_profile,
    solve_profile,
    tail_slope,
    tail_value,
)


@pytest.fixture(scope="module")
def prof40():
    return solve_profile(40.0, 1e-10)


def test_collocation_agrees_with_shooting():
    a, _ = shoot_profile()
    p = default_profile()
    assert p.slope_at_origin == pytest.approx(a, abs=1e-7)
    assert p.slope_at_origin == pytest.approx(F_PRIME_0, abs=1e-9)


def test_shooting_trajectory_matches_profile_values():
    a, sol = shoot_profile()
    p = default_profile()
    r = np.linspace(0.1, 5.0, 50)
    f_shoot = sol.sol(r)[0]
    assert np.max(np.abs(f_shoot - p(r, exact=True))) < 1e-6


def test_profile_shape(prof40):
    r = np.linspace(0, 60, 2001)
    f = prof40(r)
    assert f[0] == 0.0
    assert np.all(np.diff(f) > 0)
    assert np.all(f < 1.0)
    assert prof40.residual < 1e-10


def test_tail_joins_smoothly(prof40):
    r = np.array([30.0, 35.0])
    assert np.allclose(prof40(r, exact=True), tail_value(r), atol=1e-9)
    assert np.allclose(prof40.derivative(r, exact=True), tail_slope(r), atol=1e-8)


def test_gamma_pinned(prof40):
    est = gamma_constant(prof40)
    assert est.error < 1e-6
    assert est.value == pytest.approx(GAMMA, abs=2e-7)


def test_gamma_independent_quadrature(prof40):
    # adaptive quad of the energy density plus the 1/R² correction, no extrapolation
    R = 40.0

    def dens(r):
        f = float(prof40(np.array([r]), exact=True)[0])
        fp = float(prof40.derivative(np.array([r]), exact=True)[0])
        return (fp**2 + f * f / r**2 + 0.5 * (1 - f * f) ** 2) * r

    val = math.pi * quad(dens, 1e-12, R, limit=400, epsabs=1e-12)[0] - math.pi * math.log(R)
    assert val - math.pi / (4 * R * R) == pytest.approx(GAMMA, abs=2e-6)


def test_finite_part_decreases_to_gamma(prof40):
    vals = [finite_part(prof40, R) for R in (5.0, 10.0, 20.0, 40.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > GAMMA


def test_half_crossing_is_inside_core():
    r = profile_crossing(default_profile())
    assert 0.5 < r < 1.5
    assert float(default_profile()(np.array([r]))[0]) == pytest.approx(0.5, abs=1e-9)


def test_solver_argument_checks():
    with pytest.raises(ValueError):
        solve_profile(10.0)
    with pytest.raises(ValueError):
        solve_profile(20.0, tol=1e-4)


def test_csv_roundtrip(tmp_path):
    p = default_profile()
    p.to_csv(tmp_path / "f.csv")
    rows = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    assert np.array_equal(rows[:, 0], p.radii)
    assert np.array_equal(rows[:, 1], p.values)
