import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from glvortex.ball_construction import (
    LowerBoundProfile,
    capital_lambda,
    circle_modulus_bound,
    circle_phase_bound,
    construct,
    grow_and_merge,
    lambda_eps,
)
from glvortex.constants import C0_LAMBDA, DEFAULT, ball_log_constant
from glvortex.grid_field import GridGeometry, Scenario, energy_density, synthesize
from glvortex.vortex_detect import initial_cover


@given(st.floats(1e-4, 0.1), st.floats(0.01, 0.49), st.sampled_from([0.02, 0.2, 2.0]))
def test_capital_lambda_matches_quadrature(eps, s_frac, c0):
    # small c0 gives the arctan form of the branch primitive, c0 = 2 the log form
    p = LowerBoundProfile(eps, c0=c0)
    s = eps + s_frac * (0.5 - eps)
    pts = [p.crossover] if 0 < p.crossover < s else None
    ref = quad(lambda x: lambda_eps(p, x), 0, s, points=pts, limit=400, epsabs=1e-12, epsrel=1e-12)[0]
    assert capital_lambda(p, s) == pytest.approx(ref, rel=1e-9, abs=1e-11)


@pytest.mark.parametrize("eps", [0.05, 0.02, 0.01, 1e-3, 1e-5])
def test_profile_properties(eps):
    chk = LowerBoundProfile.from_constants(eps).check()
    assert chk["increasing"]
    assert chk["ratio_nonincreasing"]
    assert chk["log_bound_slack"] >= 0
    assert chk["c3_slack"] >= -1e-15


def test_log_bound_constant_is_a_sup():
    # C0 must dominate max_s (π log(s/eps) − Λ(s)) for every eps <= 0.05, tightly
    worst = 0.0
    for eps in np.geomspace(1e-7, 0.05, 40):
        p = LowerBoundProfile.from_constants(eps)
        s = np.geomspace(eps, 0.5, 4000)
        worst = max(worst, float(np.max(math.pi * np.log(s / eps) - capital_lambda(p, s))))
    assert worst <= C0_LAMBDA
    assert worst > C0_LAMBDA - 0.02


def test_ball_log_constant_formula():
    assert ball_log_constant() == pytest.approx(C0_LAMBDA / math.pi + math.log(6 / math.pi))
    assert DEFAULT.C_ball == ball_log_constant()


def test_profile_argument_checks():
    with pytest.raises(ValueError):
        LowerBoundProfile(0.01, c1=0.01, c2=0.05)
    with pytest.raises(ValueError):
        lambda_eps(LowerBoundProfile(0.01), 0.0)
    with pytest.raises(ValueError):
        capital_lambda(LowerBoundProfile(0.01), -1.0)


GEOM = GridGeometry.square(1.0, 241)


@pytest.fixture(scope="module")
def single():
    u, a = synthesize(Scenario("single-vortex", 0.02, vortices=(((0.0, 0.0), 1),)), GEOM)
    return u, a, energy_density(u, a)


@pytest.mark.parametrize("r", [0.05, 0.1, 0.3])
def test_circle_bounds_hold_for_a_vortex(single, r):
    u, a, _ = single
    lhs, rhs = circle_modulus_bound(u, (0.01, 0.0), r)
    assert lhs >= rhs
    lhs, rhs = circle_phase_bound(u, a, (0.01, 0.0), r)
    assert lhs >= rhs


def test_single_vortex_growth(single):
    u, a, e = single
    seed = initial_cover(u, a, e=e)
    tr = grow_and_merge(seed, u, e=e, s_target=0.3)
    fam = tr.family_at(0.2)
    assert len(fam) == 1
    assert fam.total_radius == pytest.approx(0.2, rel=1e-12)
    assert tr.worst_status() == "pass"
    assert tr.s_final == pytest.approx(0.3)


def test_growth_invariants_for_a_cluster():
    u, a = synthesize(Scenario("multi-vortex", 0.01, vortices=(
        ((-0.2, 0.0), 1), ((0.15, 0.1), 1), ((0.1, -0.25), -1), ((0.4, 0.4), 1))), GEOM)
    e = energy_density(u, a)
    seed = initial_cover(u, a, e=e)
    tr = grow_and_merge(seed, u, e=e, s_target=0.3)
    total_deg = int(seed.degrees.sum())
    prev_s, prev_r = -1.0, 0.0
    for s, balls, growing in tr.snapshots:
        assert s >= prev_s
        r = sum(b.radius for b in balls)
        assert r >= prev_r - 1e-12
        assert sum(b.degree for b in balls) == total_deg
        prev_s, prev_r = s, r
    for s in np.linspace(tr.snapshots[0][0], tr.s_final, 25):
        fam = tr.family_at(float(s))
        assert fam.is_disjoint() or any(ev["s"] == pytest.approx(s) for ev in tr.events)
    assert any(ev["kind"] == "merge" for ev in tr.events)


def test_dipole_merges_to_degree_zero_and_stops():
    u, a = synthesize(Scenario("multi-vortex", 0.02, vortices=(((-0.1, 0.0), 1), ((0.1, 0.0), -1))), GEOM)
    e = energy_density(u, a)
    tr = grow_and_merge(initial_cover(u, a, e=e), u, e=e, s_target=0.4)
    fam = tr.final
    assert len(fam) == 1 and fam[0].degree == 0
    merge_s = [ev["s"] for ev in tr.events if ev["kind"] == "merge"][0]
    assert tr.total_radius(0.4) == pytest.approx(tr.total_radius(merge_s), rel=1e-12)


def test_construct_single_vortex(single):
    u, a, e = single
    fam, verdict, trace = construct(u, a, 0.3, 2.0, e=e)
    assert verdict.flags["covers_S"]
    assert verdict.flags["total_radius_ok"]
    assert verdict.flags["winding_matches"]
    assert fam.is_disjoint()
    assert fam.total_radius <= 0.3
    assert verdict.branch == 2
    assert verdict.to_csv_rows()[0][0] == "aggregate"


def test_construct_argument_checks(single):
    u, a, e = single
    with pytest.raises(ValueError):
        construct(u, a, 0.5, 2.0, e=e)
    with pytest.raises(ValueError):
        construct(u, a, 0.3, 1.5, e=e)
    with pytest.raises(ValueError):
        grow_and_merge(initial_cover(u, a, e=e), u, e=e, s_target=0.5)
