import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glvortex.constants import DEFAULT
from glvortex.covering_localization import (
    AtomicMeasure,
    assemble_f,
    build_covering,
    c_bar_alpha,
    enclose_balls,
    good_radii,
    lambda_alpha,
    vorticity_mass_bound,
    n_alpha,
    small_radius,
)
from glvortex.grid_field import GridGeometry
from glvortex.harness import Run, load_config
from glvortex.vortex_detect import Ball


@pytest.fixture(scope="module")
def cov():
    return build_covering(GridGeometry.square(1.0, 201), 0.1)


def test_covering_numbers(cov):
    g = cov.geometry
    cnt = sum(c.nodes.astype(int) for c in cov.cells)
    assert cnt[g.mask].min() >= 1
    # closed discs of radius l0 on the l0 lattice: a lattice point lies in its
    # own disc and on the rim of its four neighbours' discs
    assert cov.overlap == 5
    # the worst point sits at a lattice-square centre, l0/√2 from its four cells
    assert cov.lebesgue == pytest.approx((1 - 1 / math.sqrt(2)) * 0.1, abs=g.spacing)
    assert cov.r0 == 0.1 and cov.r1 == pytest.approx(0.3)


def test_cells_and_lookup(cov):
    g = cov.geometry
    for alpha in (0, 17, len(cov) - 1):
        c = cov.cells[alpha]
        assert not np.any(c.nodes & ~c.enlarged)
        X, Y = g.coords
        far = (X - c.center[0]) ** 2 + (Y - c.center[1]) ** 2 > (3 * 0.1) ** 2 * (1 + 1e-9)
        assert not np.any(c.enlarged & far)
    a = cov.cell_of_point((0.013, -0.021))
    assert math.dist(cov.cells[a].center, (0.013, -0.021)) <= 0.1


def test_covering_rejects_bad_ell0():
    with pytest.raises(ValueError, match="ell0"):
        build_covering(GridGeometry.square(1.0, 41), 0.2)


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 0.15)), max_size=6),
       st.floats(0.05, 0.2))
def test_good_radii_avoid_every_ball(raw, r0):
    center = (0.0, 0.0)
    balls = [Ball((x, y), r) for x, y, r in raw]
    segs = good_radii(center, r0, 3 * r0, balls)
    assert all(r0 <= a < b <= 3 * r0 for a, b in segs)
    # brute force over a fine sample of radii
    for t in np.linspace(r0, 3 * r0, 400)[1:-1]:
        free = all(abs(t - math.dist(center, b.center)) > b.radius for b in balls)
        inside = any(a < t < b for a, b in segs)
        edge = any(abs(abs(t - math.dist(center, b.center)) - b.radius) < 1e-12 for b in balls)
        assert free == inside or edge


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 0.3), st.integers(-1, 1)),
                min_size=1, max_size=5))
def test_enclose_balls_contains_all(raw):
    balls = [Ball((x, y), r, d) for x, y, r, d in raw]
    big = enclose_balls(balls)
    assert all(big.contains_ball(b, slack=1e-9) for b in balls)
    assert big.degree == sum(b.degree for b in balls)
    # never worse than the disc centred on the first ball, up to the outward
    # rounding of the 128-gon sampling
    naive = max(math.dist(balls[0].center, b.center) + b.radius for b in balls)
    assert big.radius <= naive / math.cos(math.pi / 128) * (1 + 1e-9)


def test_cbar_and_lambda_closed_forms():
    eps = 0.01
    assert c_bar_alpha(0, 5.0, 10.0, eps) == 2.0
    assert c_bar_alpha(1, 5.0, 10.0, eps) == 10.0
    assert c_bar_alpha(1, 100.0, 10.0, eps) == pytest.approx(300 / math.log(100))
    with pytest.raises(ValueError, match="must exceed"):
        c_bar_alpha(1, 5.0, 10.0, eps, m_prime=4, strict=True)
    lam = lambda_alpha(eps, 0.12, 2.0, strict=False)
    assert lam.value == pytest.approx(0.5 * (math.log(0.12 / (eps * 2)) - DEFAULT.C_ball))
    assert lam.below_half_log
    with pytest.raises(ValueError, match="admissible"):
        lambda_alpha(eps, 0.05, 2.0)
    with pytest.raises(ValueError, match="at least 2"):
        lambda_alpha(eps, 0.12, 1.0, strict=False)


def test_small_radius():
    assert small_radius(0.01, 0.12) == pytest.approx(0.1)
    assert small_radius(0.04, 0.12) == pytest.approx(0.12)


def test_atomic_measure_validation():
    g = GridGeometry.square(1.0, 11)
    with pytest.raises(ValueError, match="distinct"):
        AtomicMeasure(g, np.zeros((2, 2)), np.ones(2))
    with pytest.raises(ValueError, match="length"):
        AtomicMeasure(g, np.zeros((1, 2)), np.ones(2))
    mu = AtomicMeasure(g, np.array([[0.03, 0.0], [0.5, 0.5]]), np.array([1.0, -2.0]), cells=[0, 1])
    assert mu.total() == pytest.approx(-1.0)
    assert mu.total_variation() == pytest.approx(3.0)
    assert mu.positive_atoms().weights.tolist() == [1.0]
    assert mu.negative_atoms().weights.tolist() == [2.0]
    assert mu.node_masses()[g.nearest_node((0.03, 0.0))] == 1.0


@pytest.fixture(scope="module")
def dipole_loc():
    return Run(load_config("dipole")).localization(0.04)


def test_dipole_vortex_measure(dipole_loc):
    nu = dipole_loc.nu
    assert sorted(nu.weights.tolist()) == pytest.approx([-2 * math.pi, 2 * math.pi])
    assert sorted(map(tuple, np.round(nu.points, 6))) == pytest.approx([(-0.1, 0.0), (0.1, 0.0)], abs=0.05)
    n = n_alpha(nu, len(dipole_loc.cov))
    assert n.sum() == pytest.approx(2.0)
    tv, bound = vorticity_mass_bound(nu, dipole_loc.e, 0.04)
    assert tv == pytest.approx(4 * math.pi) and tv <= bound


def test_excess_density_total(dipole_loc):
    loc = dipole_loc
    f = assemble_f(loc.e, loc.nu, 0.04)
    expect = loc.e.integrate() - 0.5 * abs(math.log(0.04)) * float(loc.nu.weights.sum())
    assert f.total() == pytest.approx(expect, rel=1e-12)


def test_extracted_family_is_disjoint_and_covers(dipole_loc):
    loc = dipole_loc
    g = loc.u.geometry
    assert loc.bep.is_disjoint()
    target = (loc.u.modulus <= 0.5) & g.mask & (g.dist_to_complement > 0.04)
    assert loc.bep.covers(g, target)
    assert len(loc.bep.meta["cells"]) == len(loc.bep)
