import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weissfb.errors import DomainError, ParameterError, ResolutionError
from weissfb.field import (GridSpec, ScalarField, circle_integral, disk_integral, extract_free_boundary,
                           gradient, read_field_csv, weighted_divergence, weighted_divergence_nodes,
                           write_field_csv)


def grid_around(center=(1.0, -1.0), half=0.6, n=129, guard=True):
    return GridSpec.square(center, half, n, axis_guard=guard)


# ----------------------------------------------------------------- GridSpec

def test_grid_rejects_axis_and_bad_spacing():
    with pytest.raises(DomainError):
        GridSpec(-0.1, -1.0, 0.1, 5, 5)
    with pytest.raises(ParameterError):
        GridSpec(0.5, -1.0, 0.0, 5, 5)
    with pytest.raises(ParameterError):
        GridSpec(0.5, -1.0, 0.1, 2, 5)


def test_field_rejects_nonfinite_and_wrong_size():
    g = grid_around(n=9)
    with pytest.raises(ParameterError):
        ScalarField(g, np.zeros(10))
    bad = np.zeros((9, 9))
    bad[3, 3] = np.nan
    with pytest.raises(ParameterError):
        ScalarField(g, bad)


# ----------------------------------------------------------------- gradient

def test_gradient_affine_exact():
    g = grid_around()
    f = ScalarField.from_function(g, lambda x, y: x)
    for X in [(1.0, -1.0), (1.13, -0.77), (0.71, -1.4)]:
        np.testing.assert_allclose(gradient(f, X), [1.0, 0.0], atol=1e-12)


def test_gradient_constant_field():
    f = ScalarField.from_function(grid_around(), lambda x, y: 3.0 + 0 * x)
    np.testing.assert_allclose(gradient(f, (1.1, -0.9)), [0.0, 0.0], atol=1e-14)


def test_gradient_quadratic_truncation():
    # grid with h = 0.01 through X = (1, 0); node-centred central difference of x^2 is exact
    g = GridSpec(0.5, -0.5, 0.01, 101, 101)
    f = ScalarField.from_function(g, lambda x, y: x * x)
    np.testing.assert_allclose(gradient(f, (1.0, 0.0)), [2.0, 0.0], atol=1e-4)


def test_gradient_outside_hull():
    f = ScalarField.from_function(grid_around(), lambda x, y: x)
    with pytest.raises(DomainError):
        gradient(f, (5.0, -1.0))


# -------------------------------------------------------- weighted divergence

@pytest.mark.parametrize("fn", [lambda x, y: 0.5 * x * x, lambda x, y: 0 * x, lambda x, y: y])
def test_weighted_divergence_symbolic_zero(fn):
    g = grid_around(n=65)
    f = ScalarField.from_function(g, fn)
    d = weighted_divergence_nodes(f)
    assert np.nanmax(np.abs(d)) <= 1e-10
    assert abs(weighted_divergence(f, 10, 20)) <= 1e-10


def test_weighted_divergence_second_order():
    # psi = x^3: div((1/x) grad psi) = d/dx(3 x) = 3
    errs = []
    for n in (33, 65, 129):
        f = ScalarField.from_function(grid_around(n=n), lambda x, y: x ** 3)
        errs.append(np.nanmax(np.abs(weighted_divergence_nodes(f) - 3.0)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_weighted_divergence_boundary_node():
    f = ScalarField.from_function(grid_around(n=9), lambda x, y: x)
    with pytest.raises(DomainError):
        weighted_divergence(f, 0, 4)


# ---------------------------------------------------------------- quadrature

def test_disk_area():
    g = grid_around(half=0.6, n=257)
    val = disk_integral(lambda x, y: np.ones_like(x), (1.0, -1.0), 0.5, g)
    assert abs(val - math.pi / 4) <= 2 * g.h


def test_disk_half_indicator():
    g = grid_around(half=0.6, n=257)
    psi = ScalarField.from_function(g, lambda x, y: np.maximum(y + 1.0, 0.0))
    r = 0.4
    val = disk_integral(lambda x, y: (psi.interp(x, y) > 0).astype(float), (1.0, -1.0), r, g, cut_fields=(psi,))
    assert abs(val - math.pi * r * r / 2) <= 4 * g.h * r


def test_disk_inverse_x_closed_form():
    g = grid_around(half=0.5, n=257)   # h = 1/256
    val = disk_integral(lambda x, y: 1.0 / x, (1.0, -1.0), 0.5, g)
    assert abs(val - 2 * math.pi * (1 - math.sqrt(0.75))) <= 1e-3


def test_disk_resolution_and_hull():
    g = grid_around(half=0.5, n=65)
    with pytest.raises(ResolutionError):
        disk_integral(lambda x, y: x, (1.0, -1.0), 2 * g.h, g)
    with pytest.raises(DomainError):
        disk_integral(lambda x, y: x, (1.0, -1.0), 0.7, g)


def test_circle_length_and_moments():
    g = grid_around(half=0.6, n=129)
    assert abs(circle_integral(lambda x, y: np.ones_like(x), (1.0, -1.0), 0.5, g) - math.pi) <= 1e-10
    assert abs(circle_integral(lambda x, y: x, (1.0, -1.0), 0.5, g) - math.pi) <= 1e-6
    psi = ScalarField.from_function(g, lambda x, y: x)
    val = circle_integral(lambda x, y: psi.interp(x, y) ** 2 / x, (1.0, -1.0), 0.5, g)
    assert abs(val - math.pi) <= 1e-4   # bilinear interpolant of x is exact; x^2/x = x


def test_circle_needs_samples():
    with pytest.raises(ParameterError):
        circle_integral(lambda x, y: x, (1.0, -1.0), 0.2, grid_around(), n_samples=32)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2),
       cx=st.floats(0.9, 1.1), cy=st.floats(-1.1, -0.9), r=st.floats(0.1, 0.4))
def test_disk_integral_exact_for_affine(a, b, c, cx, cy, r):
    g = grid_around(half=0.6, n=129)
    val = disk_integral(lambda x, y: a + b * x + c * y, (cx, cy), r, g)
    exact = math.pi * r * r * (a + b * cx + c * cy)
    # midpoint rule is exact on interior cells; cut cells carry an O(h^2) area error
    assert abs(val - exact) <= 5 * (abs(a) + abs(b) * 2 + abs(c) * 2) * g.h ** 2 * 2 * math.pi * r / g.h


# ------------------------------------------------------------- free boundary

def test_free_boundary_linear_level_set():
    g = GridSpec(0.5, -1.0, 2.0 / 64, 65, 65)
    f = ScalarField.from_function(g, lambda x, y: y)
    fb = extract_free_boundary(f)
    assert not fb.is_empty
    assert np.max(np.abs(fb.points()[:, 1])) <= g.h


def test_free_boundary_single_phase_is_empty():
    f = ScalarField.from_function(grid_around(n=17), lambda x, y: 1.0 + 0 * x)
    assert extract_free_boundary(f).is_empty
    g = ScalarField.from_function(grid_around(n=17), lambda x, y: -1.0 - 0 * x)
    assert extract_free_boundary(g).is_empty


def test_free_boundary_tilted_line_normals():
    nu = np.array([math.cos(math.pi / 6), math.sin(math.pi / 6)])
    g = grid_around(n=65)
    f = ScalarField.from_function(g, lambda x, y: (x - 1) * nu[0] + (y + 1) * nu[1])
    fb = extract_free_boundary(f)
    P = fb.points()
    assert np.max(np.abs((P[:, 0] - 1) * nu[0] + (P[:, 1] + 1) * nu[1])) <= 1e-12
    assert np.max(np.abs(fb.normals - nu)) <= 1e-6
    np.testing.assert_allclose(np.hypot(fb.normals[:, 0], fb.normals[:, 1]), 1.0, atol=1e-12)


def test_free_boundary_closed_chain_for_disk():
    g = grid_around(half=0.5, n=129)
    f = ScalarField.from_function(g, lambda x, y: 0.09 - (x - 1) ** 2 - (y + 1) ** 2)
    fb = extract_free_boundary(f)
    ends = np.round(fb.segments.reshape(-1, 2) / g.h * 1e6).astype(np.int64)
    _, counts = np.unique(ends, axis=0, return_counts=True)
    assert np.all(counts == 2)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.1, 5.0))
def test_free_boundary_sign_flip_without_crossing(c):
    g = grid_around(n=17)
    f = ScalarField.from_function(g, lambda x, y: c + (x - 1) ** 2)
    assert extract_free_boundary(f).is_empty
    assert extract_free_boundary(f.with_values(-f.values)).is_empty


# ---------------------------------------------------------------- field dump

def test_field_csv_roundtrip(tmp_path):
    g = grid_around(n=9)
    f = ScalarField.from_function(g, lambda x, y: np.sin(3 * x) * y / 7)
    p = tmp_path / "f.csv"
    write_field_csv(f, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# nx,ny,h,x_min,y_min"
    assert lines[2] == "i,j,x,y,value"
    assert len(lines) == 3 + 81
    back = read_field_csv(p)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
