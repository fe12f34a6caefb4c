import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glvortex.constants import C1_MEASURED_MIN, Constants
from glvortex.grid_field import ComplexGrid, GridGeometry, Scenario, energy_density, synthesize
from glvortex.harness import Run, list_presets, load_config
from glvortex.vortex_detect import (
    Ball,
    BallFamily,
    ZeroOnCircle,
    enclosing_circle,
    initial_cover,
    merge_until_disjoint,
    plaquette_winding,
    sublevel_components,
    winding_number,
)

GEOM = GridGeometry.square(1.0, 101)


def _vortex(p, d, eps=0.05, geom=GEOM):
    return synthesize(Scenario("single-vortex", eps, vortices=((p, d),)), geom)


@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.sampled_from([-2, -1, 1, 2]),
       st.floats(0.15, 0.5))
def test_winding_number_recovers_degree(x, y, d, r):
    u, _ = _vortex((x, y), d)
    assert winding_number(u, (x, y), r) == d
    # a circle that misses the core sees degree 0
    far = (-0.75 if x > 0 else 0.75, 0.0)
    assert winding_number(u, far, 0.1) == 0


def test_winding_number_errors():
    u, _ = _vortex((0.0, 0.0), 1)
    with pytest.raises(ValueError, match="leaves"):
        winding_number(u, (0.8, 0.0), 0.5)
    zero = ComplexGrid(GEOM, np.zeros(GEOM.shape), 0.05)
    with pytest.raises(ZeroOnCircle):
        winding_number(zero, (0.0, 0.0), 0.3)


def test_plaquette_total_equals_degree_sum():
    u, _ = synthesize(Scenario("multi-vortex", 0.03, vortices=(((-0.3, 0.1), 1), ((0.2, -0.2), 2),
                                                              ((0.25, 0.35), -1))), GEOM)
    w = plaquette_winding(u)
    assert int(w.sum()) == 2
    assert set(np.unique(w)) <= {-1, 0, 1, 2}


def test_dipole_components():
    u, _ = synthesize(Scenario("multi-vortex", 0.04, vortices=(((-0.3, 0.0), 1), ((0.3, 0.0), -1))),
                      GEOM)
    comps = sublevel_components(u)
    assert len(comps) == 2
    assert all(comps.compact)
    assert sorted(comps.degree) == [-1, 1]
    assert list(comps.degree) == list(comps.circle_degree)
    assert comps.essential == [0, 1]


def test_component_touching_the_boundary_layer_is_not_compact():
    # hand-built vortex 1.5ε from the edge: the sublevel set reaches ∂U_eps
    g = GEOM
    X, Y = g.coords
    eps = 0.05
    p = (1.0 - 1.5 * eps, 0.0)
    r = np.hypot(X - p[0], Y - p[1])
    u = ComplexGrid(g, np.tanh(r / eps) * np.exp(1j * np.arctan2(Y - p[1], X - p[0])), eps)
    comps = sublevel_components(u)
    assert len(comps) == 1
    assert comps.compact == (False,)
    assert comps.degree == (None,)
    assert comps.essential == []


def _brute_circle(pts):
    # smallest circle among those through 2 or 3 points that contains every point
    best = None
    cands = []
    for a, b in itertools.combinations(pts, 2):
        c = (a + b) / 2
        cands.append((c, np.linalg.norm(a - c)))
    for a, b, c in itertools.combinations(pts, 3):
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-12:
            continue
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        ctr = np.array([ux, uy])
        cands.append((ctr, np.linalg.norm(a - ctr)))
    for c, r in cands:
        if np.all(np.linalg.norm(pts - c, axis=1) <= r + 1e-9):
            if best is None or r < best:
                best = r
    return best


@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=2, max_size=9,
                unique=True))
def test_enclosing_circle_is_minimal(raw):
    pts = np.array(raw, float) / 10
    (cx, cy), r = enclosing_circle(pts[:, 0], pts[:, 1])
    assert np.all(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy) <= r * (1 + 1e-9) + 1e-12)
    assert r == pytest.approx(_brute_circle(pts), rel=1e-9, abs=1e-12)


ball_st = st.builds(lambda x, y, r, d: Ball((x, y), r, d),
                    st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 0.3), st.integers(-2, 2))


@given(st.lists(ball_st, min_size=1, max_size=8))
def test_merging_keeps_radius_degree_and_containment(balls):
    merged = merge_until_disjoint(balls)
    fam = BallFamily(tuple(merged))
    assert fam.is_disjoint()
    assert fam.total_radius == pytest.approx(sum(b.radius for b in balls), rel=1e-12)
    assert int(fam.degrees.sum()) == sum(b.degree for b in balls)
    for b in balls:
        assert any(m.contains_ball(b, slack=1e-9) for m in merged)


def test_ball_family_json_roundtrip():
    fam = BallFamily((Ball((0.1, 0.2), 0.3, 1, 2.5), Ball((-0.5, 0.0), 0.1, -1)))
    back = BallFamily.from_json(fam.to_json())
    assert back.balls[0] == fam.balls[0]
    assert back.balls[1].center == fam.balls[1].center
    assert math.isnan(back.balls[1].energy)


def test_initial_cover_properties():
    u, a = synthesize(Scenario("multi-vortex", 0.03, vortices=(((-0.3, 0.1), 1), ((0.2, -0.2), -1),
                                                              ((0.25, 0.35), 1))), GEOM)
    e = energy_density(u, a)
    comps = sublevel_components(u)
    fam = initial_cover(u, a, comps=comps, e=e)
    assert len(fam) == 3
    assert fam.is_disjoint()
    assert all(b.radius >= u.epsilon for b in fam)
    assert fam.covers(GEOM, comps.essential_mask())
    assert sorted(fam.degrees) == [-1, 1, 1]


def test_seed_energy_constant_remeasured():
    # min of e(B) eps / r(B) over the seed balls of every preset and epsilon
    loose = Constants(c1=1e-9, c2=1e-10)
    ratios = []
    for name in list_presets():
        cfg = load_config(name)
        run = Run(cfg)
        for eps in cfg.epsilons:
            u, a, e = run.fields(eps)
            ratios += [b.energy * eps / b.radius for b in initial_cover(u, a, constants=loose, e=e)]
    assert min(ratios) >= C1_MEASURED_MIN
    assert min(ratios) < C1_MEASURED_MIN + 0.01
