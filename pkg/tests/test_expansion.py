import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdno import spectral as sp
from gdno.errors import UnsupportedDiffeo
from gdno.expansion import Jet, dG_II, g0_I, gj_I, gj_II, taylor_gdno
from gdno.geometry import make_regularizing_diffeo, make_trivial_diffeo
from gdno.oracle import slope_fit
from gdno.solver import SurfaceState, gdno

from conftest import wavy

coef = st.lists(st.floats(-3, 3), min_size=4, max_size=4)


@given(coef, coef, st.floats(-0.5, 0.5))
@settings(max_examples=40, deadline=None)
def test_jet_product_matches_polynomial(a, b, eps):
    A, B = Jet([np.float64(x) for x in a]), Jet([np.float64(x) for x in b])
    prod = np.polynomial.polynomial.polymul(a, b)[:4]
    assert np.isclose((A * B).evaluate(eps), np.polyval(prod[::-1], eps), atol=1e-9)


@given(coef, st.floats(-0.3, 0.3))
@settings(max_examples=40, deadline=None)
def test_jet_reciprocal(a, eps):
    a = [1.0 + abs(a[0])] + a[1:]
    A = Jet([np.float64(x) for x in a])
    one = (A * A.reciprocal()).c
    assert np.isclose(one[0], 1.0) and np.allclose(one[1:], 0.0, atol=1e-9)


def test_order_cap():
    g = sp.HGrid(8, 8)
    with pytest.raises(ValueError):
        gj_I(np.zeros(g.shape), np.zeros(g.shape), 1.0, 7, g)


def test_zeroth_order_is_flat(grid32):
    g = grid32
    Phi = np.cos(g.X - 2 * g.Y)
    G = gj_I(wavy(g), Phi, 1.0, 2, g)
    assert np.allclose(G[0], g0_I(Phi, 1.0, g), atol=1e-14)


def test_first_order_linear_in_eta(grid32):
    g = grid32
    eta, Phi = wavy(g), np.sin(g.X + g.Y)
    G1 = gj_I(eta, Phi, 1.0, 1, g)[1]
    G1b = gj_I(3 * eta, Phi, 1.0, 1, g)[1]
    assert np.allclose(G1b, 3 * G1, atol=1e-13)


def test_irrotational_truncation_slope(grid32, vgrid24):
    g, vg = grid32, vgrid24
    Phi = np.sin(g.X) + 0.5 * np.cos(g.Y)
    base = wavy(g, 1.0)
    samples = []
    for a in (0.08, 0.04, 0.02):
        d = make_trivial_diffeo(a * base, 1.0, g, vg)
        exact = gdno(SurfaceState(a * base, Phi), None, d, velocity=False).G
        approx = taylor_gdno(SurfaceState(a * base, Phi), None, d, 1)
        samples.append((a, sp.l2_norm(g, exact - approx)))
    p, _ = slope_fit(samples)
    assert abs(p - 2) < 0.3


def test_rotational_requires_trivial(grid16):
    vg = sp.VGrid(12, 1.0)
    d = make_regularizing_diffeo(np.zeros(grid16.shape), 1.0, 0.1, sp.BumpProfile(), grid16, vg)
    om = np.zeros((3, vg.Nw) + grid16.shape)
    with pytest.raises(UnsupportedDiffeo):
        gj_II(np.zeros(grid16.shape), om, d)


def test_dG_II_linear_in_direction(grid16):
    g = grid16
    vg = sp.VGrid(16, 1.0)
    eta = 0.05 * np.cos(g.X)
    d = make_trivial_diffeo(eta, 1.0, g, vg)
    om = np.zeros((3, vg.Nw) + g.shape)
    om[1] = np.cos(g.X)
    e1, e2 = np.cos(2 * g.X), np.sin(g.X)
    lhs = dG_II(eta, e1 + 2 * e2, om, d)
    rhs = dG_II(eta, e1, om, d) + 2 * dG_II(eta, e2, om, d)
    assert np.allclose(lhs, rhs, atol=1e-9)
    assert not np.any(dG_II(eta, 0 * e1, om, d))
