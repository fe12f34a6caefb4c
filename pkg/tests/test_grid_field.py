import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from glvortex.grid_field import (
    ComplexGrid,
    GeometryMismatch,
    GridGeometry,
    ScalarGrid,
    Scenario,
    VectorGrid,
    current,
    energy_density,
    field_strength,
    rect_disc_area,
    read_glf1,
    synthesize,
    vorticity,
    write_glf1,
)


def _chord_area(x0, x1, y0, y1, R):
    # independent oracle: integrate the clipped chord length numerically
    def chord(t):
        if abs(t) >= R:
            return 0.0
        s = math.sqrt(R * R - t * t)
        return max(0.0, min(y1, s) - max(y0, -s))
    lo, hi = max(x0, -R), min(x1, R)
    if hi <= lo:
        return 0.0
    return quad(chord, lo, hi, points=[-R, R], limit=200, epsabs=1e-13)[0]


coord = st.floats(-2.0, 2.0, allow_nan=False)


@given(coord, coord, coord, coord, st.floats(0.05, 2.0))
def test_rect_disc_area_matches_quadrature(a, b, c, d, R):
    x0, x1 = sorted((a, b))
    y0, y1 = sorted((c, d))
    got = float(rect_disc_area(x0, x1, y0, y1, R))
    assert got == pytest.approx(_chord_area(x0, x1, y0, y1, R), abs=1e-9)


def test_rect_disc_area_whole_disc():
    assert float(rect_disc_area(-3, 3, -3, 3, 1.3)) == pytest.approx(math.pi * 1.3**2, rel=1e-14)


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.02, 0.5))
def test_disc_fraction_sums_to_disc_area(cx, cy, r):
    g = GridGeometry.square(1.0, 81)
    _, _, w = g.disc_fraction((cx, cy), r)
    assert np.sum(w) * g.cell_area == pytest.approx(math.pi * r * r, rel=1e-10)


def test_geometry_validation():
    with pytest.raises(ValueError):
        GridGeometry(10, 10, 0.0)
    with pytest.raises(ValueError):
        GridGeometry(3, 10, 0.1)
    mask = np.zeros((10, 10), bool)
    mask[:3, :] = True
    mask[6:, :] = True
    with pytest.raises(ValueError, match="4-connected"):
        GridGeometry(10, 10, 0.1, mask=mask)


def test_field_shape_mismatch():
    g = GridGeometry.square(1.0, 11)
    with pytest.raises(GeometryMismatch):
        ComplexGrid(g, np.ones((10, 11)), 0.1)
    with pytest.raises(GeometryMismatch):
        energy_density(ComplexGrid(g, np.ones((11, 11)), 0.1),
                       VectorGrid.zeros(GridGeometry.square(1.0, 12)))


def test_uniform_state_has_zero_energy():
    g = GridGeometry.square(1.0, 41)
    u, a = synthesize(Scenario("uniform", 0.05, value=np.exp(0.7j)), g)
    assert np.max(energy_density(u, a).values) < 1e-25


def test_constant_field_gauge_curl():
    g = GridGeometry.square(1.0, 41)
    u, a = synthesize(Scenario("uniform", 0.05, gauge="constant-field", h0=1.7), g)
    assert np.allclose(field_strength(a).values, 1.7, atol=1e-12)


def test_unit_bound_is_asserted_not_clamped():
    g = GridGeometry.square(1.0, 11)
    u = ComplexGrid(g, np.full((11, 11), 1.0 + 1e-6), 0.1)
    with pytest.raises(ValueError, match="> 1"):
        u.check_unit_bound()


def test_gauge_covariance_to_second_order():
    # e(u e^{iφ}, A + ∇φ) = e(u, A) up to the O(h²) error of the stencil
    errs = []
    for n in (81, 161):
        g = GridGeometry.square(1.0, n)
        X, Y = g.coords
        u, a = synthesize(Scenario("single-vortex", 0.2, vortices=(((0.1, -0.05), 1),)), g)
        phi = 0.3 * np.sin(2 * X) * np.cos(Y)
        grad = np.stack([0.6 * np.cos(2 * X) * np.cos(Y), -0.3 * np.sin(2 * X) * np.sin(Y)], -1)
        e0 = energy_density(u, a).integrate()
        e1 = energy_density(ComplexGrid(g, u.values * np.exp(1j * phi), u.epsilon),
                            VectorGrid(g, a.values + grad)).integrate()
        errs.append(abs(e1 - e0) / e0)
    assert errs[1] < 1e-3
    assert errs[1] < errs[0] / 3


def test_phase_current_far_from_core():
    g = GridGeometry.square(1.0, 201)
    u, a = synthesize(Scenario("single-vortex", 0.02, vortices=(((0.0, 0.0), 1),)), g)
    j = current(u, a).values
    X, Y = g.coords
    r2 = np.maximum(X**2 + Y**2, 1e-300)
    far = (r2 > 0.25**2) & (np.abs(X) < 0.9) & (np.abs(Y) < 0.9)
    # j = |u|² ∇θ for a single vortex in the zero gauge
    exact = (u.modulus**2)[..., None] * np.stack([-Y / r2, X / r2], -1)
    assert np.max(np.abs(j - exact)[far]) < 2e-3 * np.max(np.abs(exact)[far])


@pytest.mark.parametrize("d", [1, -1, 2])
def test_total_vorticity_is_two_pi_degree(d):
    g = GridGeometry.square(1.0, 201)
    u, a = synthesize(Scenario("single-vortex", 0.05, vortices=(((0.02, 0.01), d),)), g)
    inner = GridGeometry.square(1.0, 201).disc_nodes((0, 0), 0.6)
    total = vorticity(u, a).integrate(inner)
    assert total == pytest.approx(2 * math.pi * d, rel=0.02)


def test_synthesize_rejects_bad_placements():
    g = GridGeometry.square(1.0, 101)
    with pytest.raises(ValueError, match="boundary"):
        synthesize(Scenario("single-vortex", 0.05, vortices=(((0.95, 0.0), 1),)), g)
    with pytest.raises(ValueError, match="closer than"):
        synthesize(Scenario("multi-vortex", 0.05, vortices=(((0.0, 0.0), 1), ((0.1, 0.0), 1))), g)
    with pytest.raises(ValueError, match="exactly one"):
        synthesize(Scenario("single-vortex", 0.05, vortices=()), g)
    with pytest.raises(ValueError, match="gauge"):
        synthesize(Scenario("uniform", 0.05, gauge="coulomb"), g)


@pytest.mark.parametrize("kind", ["complex", "vector2", "scalar"])
def test_glf1_roundtrip_is_bit_exact(kind, tmp_path):
    rng = np.random.default_rng(3)
    mask = np.ones((9, 7), bool)
    mask[0, 0] = False
    g = GridGeometry(9, 7, 0.1 / 3, (-0.123, 0.456), mask)
    if kind == "complex":
        v = rng.uniform(0, 1, (9, 7)) * np.exp(1j * rng.uniform(0, 6, (9, 7)))
        f, eps = ComplexGrid(g, v, 1 / 30), 1 / 30
    elif kind == "vector2":
        f, eps = VectorGrid(g, rng.normal(size=(9, 7, 2))), None
    else:
        f, eps = ScalarGrid(g, rng.normal(size=(9, 7))), 0.07
    path = tmp_path / "f.glf1"
    write_glf1(path, f, eps)
    back, eps2 = read_glf1(path)
    assert eps2 == eps
    assert back.geometry.same_as(g)
    assert np.array_equal(back.values, f.values)


def test_glf1_rejects_garbage():
    with pytest.raises(ValueError, match="GLF1"):
        read_glf1(io.BytesIO(b"NOPE\n"))
    buf = io.BytesIO()
    write_glf1(buf, ScalarGrid(GridGeometry.square(1.0, 5), np.zeros((5, 5))))
    with pytest.raises(ValueError, match="truncated"):
        read_glf1(io.BytesIO(buf.getvalue()[:-3]))
