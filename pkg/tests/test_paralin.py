import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdno import spectral as sp
from gdno import paralin as pl
from gdno.errors import DeltaOutOfRange
from gdno.geometry import make_trivial_diffeo
from gdno.solver import SurfaceState, gdno


@pytest.fixture(scope="module")
def g16():
    return sp.HGrid(16, 16)


@pytest.fixture(scope="module")
def v16():
    return sp.VGrid(16, 1.0)


def test_cutoff_validation():
    with pytest.raises(ValueError):
        pl.Cutoff(0.2, 0.3)
    assert pl.Cutoff() == pl.Cutoff(0.1, 0.45)


def test_cutoff_properties(g16):
    c = pl.Cutoff()
    props = c.check_properties()
    assert props["one"] and props["zero"] and props["range"] and props["symmetric"]
    assert all(c.check_on_grid(g16).values())


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=60, deadline=None)
def test_cutoff_vanishes_off_cone(a, b, p, q):
    c = pl.Cutoff()
    x1, x2 = np.array([a, b]), np.array([p, q])
    if np.linalg.norm(x1) >= c.eps2 * np.linalg.norm(x2):
        assert c(x1, x2) == 0.0


def test_constant_symbol_keeps_high_mode(g16):
    u = np.cos(5 * g16.X + 2 * g16.Y)
    assert np.allclose(pl.paradiff_apply(1.0, u, grid=g16), u, atol=1e-14)
    assert not np.any(pl.paradiff_apply(1.0, np.zeros(g16.shape), grid=g16))


def test_low_high_paraproduct_is_product():
    g = sp.HGrid(32, 32)
    a = 1.0 + 0.3 * np.cos(g.Y)
    u = np.sin(12 * g.X)
    assert np.allclose(pl.paraproduct(a, u, grid=g), a * u, atol=1e-10)


def test_adjoint(g16):
    rng = np.random.default_rng(2)
    a, u, v = (rng.standard_normal(g16.shape) for _ in range(3))
    lhs = np.sum(pl.paraproduct(a, u, grid=g16) * v)
    rhs = np.sum(u * pl.paradiff_adjoint(a, v, grid=g16))
    assert np.isclose(lhs, rhs, rtol=1e-10)


def test_multiplier_symbol_matches_fourier(g16):
    lam = pl.dno_principal_symbol(np.zeros(g16.shape), g16)
    u = np.cos(4 * g16.X) + np.sin(3 * g16.Y - 5 * g16.X)
    expect = sp.apply_multiplier(g16, u, g16.kabs)
    assert np.allclose(pl.paradiff_apply(lam, u), expect, atol=1e-12)


def test_principal_symbol_examples(g16):
    lam = pl.dno_principal_symbol(np.zeros(g16.shape), g16)
    assert np.allclose(lam(3.0, 4.0), 5.0)
    # xi orthogonal to grad eta: sqrt(1 + |grad eta|^2) |xi|, i.e. sqrt(2)|xi| where eta_x = 1
    eta = np.sin(g16.X)
    lam = pl.dno_principal_symbol(eta, g16)
    ex = np.cos(g16.X)
    assert np.allclose(lam(0.0, 2.0)[0], 2.0 * np.sqrt(1 + ex**2))
    assert np.isclose(lam(0.0, 2.0)[0, 0, 0], 2.0 * np.sqrt(2.0))
    assert lam.check_homogeneity()


def test_factorization_flat(g16):
    fac = pl.Factorization(np.zeros(g16.shape), 1.0, g16)
    k = np.array([1.0, 3.0])[:, None, None], np.array([2.0, -1.0])[:, None, None]
    r = np.hypot(*k)
    assert np.allclose(fac.m1(*k), r)
    assert np.allclose(fac.n1(*k), -r)
    assert np.allclose(fac.m0(*k), 0.0)


def test_factorization_identity_and_ellipticity(g16):
    eta = 0.2 * np.cos(g16.X) + 0.1 * np.sin(g16.X + 2 * g16.Y)
    delta = 0.7
    fac = pl.Factorization(eta, delta, g16)
    th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    kx, ky = 3 * np.cos(th), 3 * np.sin(th)
    ex, ey = sp.grad(g16, eta)
    lam = pl.dno_principal_symbol(eta, g16)(kx, ky)
    K = kx[:, None, None], ky[:, None, None]
    expect = delta * (1j * (K[0] * ex + K[1] * ey) + lam) / (1 + ex**2 + ey**2)
    assert np.max(np.abs(fac.m1(*K) - expect)) < 1e-12
    assert np.allclose(fac.m1(*K).real, -fac.n1(*K).real)
    assert np.min(fac.ellipticity_margin(*K)) >= 0


def test_strip_localize_examples(g16, v16):
    zero = np.zeros(g16.shape)
    d0 = make_trivial_diffeo(zero, 1.0, g16, v16)
    f = np.random.default_rng(0).standard_normal((v16.Nw,) + g16.shape)
    assert np.allclose(pl.strip_localize({"f": f}, d0, 1.0).fields["f"], f, atol=1e-12)
    with pytest.raises(DeltaOutOfRange):
        pl.strip_localize({"f": f}, d0, 1.5)
    with pytest.raises(DeltaOutOfRange):
        pl.strip_localize({"f": f}, d0, 0.0)

    eta = 0.1 * np.cos(g16.X) + 0.05 * np.sin(g16.Y)
    d = make_trivial_diffeo(eta, 1.0, g16, v16)
    z = v16.w[:, None, None] + d.sigma  # physical height on straightened nodes
    delta = 0.8
    got = pl.strip_localize({"z": z}, d, delta).fields["z"]
    assert np.allclose(got, delta * v16.w[:, None, None] + eta, atol=1e-12)


def test_strip_round_trip():
    g, v = sp.HGrid(16, 16), sp.VGrid(32, 1.0)
    eta = 0.1 * np.cos(g.X) + 0.05 * np.sin(g.Y)
    d = make_trivial_diffeo(eta, 1.0, g, v)
    z = v.w[:, None, None] + d.sigma
    f = np.cos(g.X) * np.exp(z) + np.sin(g.Y) * np.cosh(2 * z)
    delta = 0.85
    sf = pl.strip_localize({"f": f}, d, delta)
    back = pl.strip_to_sigma(sf.fields, d, delta)["f"]
    mask = ~np.isnan(back)
    assert mask.mean() > 0.5
    assert np.max(np.abs((back - f)[mask])) < 1e-8


def test_good_unknown_examples(g16, v16):
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, v16.Nw) + g16.shape)
    zero = np.zeros(g16.shape)
    assert np.allclose(pl.good_unknown(A, zero, 0.9, v16, grid=g16), A)
    eta = 0.1 * np.cos(g16.X)
    flat_in_w = np.broadcast_to(rng.standard_normal((3, 1) + g16.shape), A.shape)
    assert np.allclose(pl.good_unknown(flat_in_w, eta, 0.9, v16, grid=g16), flat_in_w, atol=1e-10)
    B = rng.standard_normal(A.shape)
    lhs = pl.good_unknown(A + 2 * B, eta, 0.9, v16, grid=g16)
    rhs = pl.good_unknown(A, eta, 0.9, v16, grid=g16) + 2 * pl.good_unknown(B, eta, 0.9, v16, grid=g16)
    assert np.max(np.abs(lhs - rhs)) < 1e-13 * max(1, np.max(np.abs(lhs)))


def test_f0_vanishes(g16, v16):
    rng = np.random.default_rng(4)
    om, A = rng.standard_normal((2, 3, v16.Nw) + g16.shape)
    zero = np.zeros(g16.shape)
    assert np.max(np.abs(pl.f0_term(zero, om, A, 1.0, v16, grid=g16))) < 1e-10
    eta = 0.1 * np.cos(g16.X)
    assert not np.any(pl.f0_term(eta, 0 * om, 0 * A, 0.9, v16, grid=g16))


def test_lambda_II_flat(g16):
    M = pl.Factorization(np.zeros(g16.shape), 1.0, g16).M
    lam = pl.lambda_II_symbol(np.zeros(g16.shape), M, 1.0, grid=g16)
    t = lam.table([2.0], [3.0])[:, 0]
    assert np.allclose(t[0], -3j) and np.allclose(t[1], 2j) and np.allclose(t[2], 0)
    assert all(s.check_homogeneity() for s in lam.as_symbol())


def test_paralinearized_gII_flat(g16, v16):
    zero = np.zeros(g16.shape)
    d = make_trivial_diffeo(zero, 1.0, g16, v16)
    om = np.zeros((3, v16.Nw) + g16.shape)
    om[1] = np.cos(3 * g16.X)
    sol = gdno(SurfaceState(zero, zero), om, d, velocity=False)
    sf = pl.strip_localize({"A": sol.A, "om": om}, d, 1.0)
    r = pl.paralinearized_gII(zero, sf.fields["om"], sf.fields["A"], 1.0, v16,
                              G_exact=sol.G_II, grid=g16)
    assert np.max(np.abs(r.residual)) < 1e-10
    r0 = pl.paralinearized_gII(zero, 0 * om, 0 * om, 1.0, v16, grid=g16)
    assert not np.any(r0.value) and not np.any(r0.residual)


def test_paralinearized_gI_examples(g16):
    zero = np.zeros(g16.shape)
    r = pl.paralinearized_gI(zero, zero, zero, grid=g16)
    assert not np.any(r.value) and not np.any(r.residual)
    Phi = np.sin(4 * g16.X)
    G = np.tanh(4.0) * 4 * Phi
    r = pl.paralinearized_gI(zero, Phi, G, grid=g16)
    assert np.allclose(r.value, 4 * Phi, atol=1e-12)
    assert np.max(np.abs(r.residual)) < 10 * np.exp(-8.0)


def test_symbol_container_roundtrip(tmp_path, g16):
    from gdno.io import load_field, save_symbol
    lam = pl.dno_principal_symbol(0.1 * np.cos(g16.X), g16)
    save_symbol(tmp_path / "lam", lam)
    vals, _, _, side = load_field(tmp_path / "lam")
    assert side["meta"]["orders"] == [1.0]
    assert vals.shape == (1, 2, g16.Nx * g16.Ny) + g16.shape
