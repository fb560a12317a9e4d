"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are collected in ``REPORT`` and printed at the end of the pytest
run (see ``conftest.py``).  Running this file as a script prints them too.
"""

import time

import numpy as np
import pytest

from gdno import oracle
from gdno import paralin as pl
from gdno import spectral as sp
from gdno.errors import DeltaTooLarge
from gdno.expansion import dG_II, g0_II, gj_I, gj_II
from gdno.geometry import make_regularizing_diffeo, make_trivial_diffeo, regularizing_bound
from gdno.solver import SurfaceState, gdno

REPORT = []
LADDER = (0.08, 0.04, 0.02)


def record(n, ok, runtime, limit, detail):
    ok = bool(ok) and runtime < limit
    REPORT.append((n, f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  "
                      f"({runtime:.1f} s / {limit:g} s)  {detail}"))
    return ok


def vorticity(hg, vg, k):
    """Three divergence-free straightened vorticities used throughout."""
    w = vg.w[:, None, None]
    om = np.zeros((3, vg.Nw) + hg.shape)
    if k == 1:
        om[1] = np.cos(hg.X)
    elif k == 2:
        om[0] = -np.sin(hg.Y)
        om[2] = 0.5 * np.cos(hg.X)
    else:
        om[1] = (1 + w) * np.cos(hg.X)
    return om


def relmax(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def test_criterion_01_flat_multiplier():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(24, 1.0)
    rng = np.random.default_rng(0)
    Phi = sp.dealias(hg, rng.standard_normal(hg.shape))
    Phi -= hg.mean(Phi)
    zero = np.zeros(hg.shape)
    sol = gdno(SurfaceState(zero, Phi), None, make_trivial_diffeo(zero, 1.0, hg, vg),
               velocity=False)
    mult = hg.kabs * np.tanh(hg.kabs)
    ref = mult * hg.fft(Phi)
    err = float(np.max(np.abs(hg.fft(sol.G) - ref)) / np.max(np.abs(ref)))
    assert record(1, err <= 1e-8, time.perf_counter() - t, 1, f"max mode error {err:.2e}")


def test_criterion_02_rotational_flat():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(24, 1.0)
    zero = np.zeros(hg.shape)
    d = make_trivial_diffeo(zero, 1.0, hg, vg)
    errs = []
    for k in (1, 2, 3):
        om = vorticity(hg, vg, k)
        G = gdno(SurfaceState(zero, zero), om, d, velocity=False).G_II
        errs.append(relmax(G, g0_II(om, 1.0, hg, vg)))
        if k == 1:
            closed = -(np.cosh(1.0) - 1) / np.cosh(1.0) * np.sin(hg.X)
            errs.append(relmax(G, closed))
    ok = max(errs) <= 1e-8
    assert record(2, ok, time.perf_counter() - t, 5,
                  "relative errors " + ", ".join(f"{e:.1e}" for e in errs))


def test_criterion_03_irrotational_reduction():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(24, 1.0)
    shape = np.cos(hg.X) + 0.5 * np.sin(2 * hg.Y)
    Phi = np.sin(hg.X) + 0.5 * np.cos(hg.Y)
    Phi2 = np.cos(hg.X + hg.Y)
    zero_om = np.zeros((3, vg.Nw) + hg.shape)
    d = make_trivial_diffeo(0.05 * shape, 1.0, hg, vg)
    gii = float(np.max(np.abs(gdno(SurfaceState(0.05 * shape, Phi2), zero_om, d,
                                   velocity=False).G_II)))
    errs = {J: [] for J in (1, 2, 3)}
    for a in LADDER:
        eta = a * shape
        G = gdno(SurfaceState(eta, Phi), None, make_trivial_diffeo(eta, 1.0, hg, vg),
                 velocity=False).G
        terms = gj_I(eta, Phi, 1.0, 3, hg)
        for J in errs:
            errs[J].append(sp.l2_norm(hg, G - sum(terms[: J + 1])))
    slopes = {J: oracle.slope_fit(list(zip(LADDER, e)))[0] for J, e in errs.items()}
    ok = gii <= 1e-12 and all(abs(p - (J + 1)) <= 0.3 for J, p in slopes.items())
    assert record(3, ok, time.perf_counter() - t, 60,
                  f"max|G_II| {gii:.1e}; slopes " +
                  ", ".join(f"J={J}: {p:.3f}" for J, p in slopes.items()))


def test_criterion_04_rotational_taylor():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(24, 1.0)
    zero = np.zeros(hg.shape)
    out, ok = [], True
    for k in (1, 2, 3):
        # the third field depends on w, so the surface must not depend on y
        # for it to stay divergence-free under the straightening
        shape = np.cos(hg.X) + 0.5 * np.sin(2 * (hg.Y if k < 3 else hg.X))
        om = vorticity(hg, vg, k)
        errs = {1: [], 2: []}
        for a in LADDER:
            eta = a * shape
            d = make_trivial_diffeo(eta, 1.0, hg, vg)
            G = gdno(SurfaceState(eta, zero), om, d, velocity=False).G_II
            terms = gj_II(eta, om, d, J=2)
            for J in errs:
                errs[J].append(sp.l2_norm(hg, G - sum(terms[: J + 1])))
        for J, e in errs.items():
            p = oracle.slope_fit(list(zip(LADDER, e)))[0]
            ok &= abs(p - (J + 1)) <= 0.4
            out.append(f"f{k}/J={J}: {p:.3f}")
    assert record(4, ok, time.perf_counter() - t, 120, "slopes " + ", ".join(out))


def test_criterion_05_shape_derivative():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(24, 1.0)
    zero = np.zeros(hg.shape)
    eta = 0.05 * np.cos(hg.X)
    de = np.cos(2 * hg.X) + 0.5 * np.sin(hg.X)
    om = vorticity(hg, vg, 3)
    D = dG_II(eta, de, om, make_trivial_diffeo(eta, 1.0, hg, vg))

    def G(e):
        return gdno(SurfaceState(e, zero), om, make_trivial_diffeo(e, 1.0, hg, vg),
                    velocity=False).G_II

    samples = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        fd = (G(eta + eps * de) - G(eta - eps * de)) / (2 * eps)
        samples.append((eps, float(np.max(np.abs(fd - D)))))
    p = oracle.slope_fit(samples)[0]
    last = samples[-1][1]
    ok = abs(p - 2) <= 0.3 and last <= 1e-5
    assert record(5, ok, time.perf_counter() - t, 120,
                  f"slope {p:.3f}; error at eps=2.5e-3: {last:.2e}")


def test_criterion_06_oracle_cross_validation():
    t = time.perf_counter()
    vg = sp.VGrid(24, 1.0)
    errs = {"phi": [], "A": []}
    c1 = 0.0
    for N in (16, 32, 64):
        fg = oracle.FDGrid(N, N, N + 1)
        hg = fg.hgrid
        eta = 0.03 * (np.cos(hg.X) + 0.5 * np.sin(hg.Y))
        c1 = max(c1, float(np.max(np.abs(eta)) + np.max(np.hypot(*sp.grad(hg, eta)))))
        Phi = np.sin(hg.X) + 0.5 * np.cos(hg.X + hg.Y)
        d = make_trivial_diffeo(eta, 1.0, hg, vg)
        om = vorticity(hg, vg, 1) + 0.5 * vorticity(hg, vg, 2)
        sol = gdno(SurfaceState(eta, Phi), om, d, velocity=False)
        trI = oracle.fd_surface_traces(phi=oracle.fd_solve_phi(Phi, d, fg), Phi=Phi, d=d, fg=fg)

        def om_fd(w):
            return np.moveaxis(np.tensordot(vg.interp_matrix(w), om, axes=([1], [1])), 0, 1)

        trII = oracle.fd_surface_traces(A=oracle.fd_solve_A(om_fd, d, fg), d=d, fg=fg)
        errs["phi"].append((1.0 / N, float(np.max(np.abs(trI["G_I"] - sol.G_I)))))
        errs["A"].append((1.0 / N, float(np.max(np.abs(trII["G_II"] - sol.G_II)))))
    slopes = {k: oracle.slope_fit(v)[0] for k, v in errs.items()}
    ok = c1 <= 0.1 and all(abs(p - 2) <= 0.3 for p in slopes.values())
    assert record(6, ok, time.perf_counter() - t, 600,
                  f"|eta|_C1 {c1:.3f}; rates phi {slopes['phi']:.3f}, A {slopes['A']:.3f}")


def test_criterion_07_bvp_residuals():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(32, 1.0)
    zero = np.zeros(hg.shape)
    wav = 0.05 * (np.cos(hg.X) + 0.5 * np.sin(2 * hg.Y))
    Phi = np.sin(hg.X) + 0.5 * np.cos(hg.Y)
    om1, om2 = vorticity(hg, vg, 1), vorticity(hg, vg, 2)
    cases = {
        "flat irrotational": (zero, Phi, None, "trivial"),
        "flat rotational": (zero, Phi, om1, "trivial"),
        "curved irrotational": (wav, Phi, None, "trivial"),
        "curved rotational": (wav, Phi, om1 + om2, "trivial"),
        "regularizing": (wav, Phi, om2, "regularizing"),
    }
    worst, ok = 0.0, True
    for eta, P, om, kind in cases.values():
        if kind == "trivial":
            d = make_trivial_diffeo(eta, 1.0, hg, vg)
        else:
            d = make_regularizing_diffeo(eta, 1.0, 0.1, sp.BumpProfile(), hg, vg)
        sol = gdno(SurfaceState(eta, P), om, d)
        rep = oracle.verify_divcurl(sol.U, om, P, d, tol=1e-6)
        ok &= rep["ok"]
        worst = max(worst, *(rep[k] for k in ("curl", "div", "bottom", "surface")))
    assert record(7, ok, time.perf_counter() - t, 30 * len(cases),
                  f"{len(cases)} cases, worst relative residual {worst:.1e}")


def test_criterion_08_paradifferential_suite():
    t = time.perf_counter()
    cut = pl.Cutoff()
    props = cut.check_properties()
    grid_ok = all(all(cut.check_on_grid(sp.HGrid(n, n)).values()) for n in (32, 64))
    props_ok = props["one"] and props["zero"] and props["range"] and props["symmetric"]

    consts = []
    for n in (32, 64):
        g = sp.HGrid(n, n)
        a = np.exp(np.cos(g.X)) * (1 + 0.5 * np.sin(2 * g.Y))
        C = pl.operator_norm(lambda u: pl.paraproduct(a, u, cut, g),
                             lambda v: pl.paradiff_adjoint(a, v, cut, g), g.shape, iters=60)
        consts.append(C / np.max(np.abs(a)))
    stable = abs(consts[1] - consts[0]) <= 0.1 * consts[1]

    # T_a T_b - T_ab for a = b = lambda1 on bands |xi| ~ K.  K >= 8 keeps the
    # spectrum of eta (|k| <= sqrt 2) inside the region where the cutoff is 1.
    g = sp.HGrid(64, 64)
    eta = 0.3 * (np.cos(g.X) + 0.5 * np.sin(g.Y) + 0.3 * np.cos(g.X + g.Y))
    lam = pl.dno_principal_symbol(eta, g)
    ex, ey = sp.grad(g, eta)
    gn = 1 + ex**2 + ey**2
    lam2 = pl.Symbol(g, [pl.SymbolComponent(
        2, lambda kx, ky: gn * (kx**2 + ky**2) - (kx * ex + ky * ey) ** 2)], "lambda1^2")
    r = np.hypot(*g.full_k)
    rng = np.random.default_rng(0)
    Ks, prod, defect = (8, 16, 24), [], []
    for K in Ks:
        band = (r >= K) & (r < K + 1)
        c = np.where(band, rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape), 0)
        u = np.real(np.fft.ifft2(c))
        u /= sp.l2_norm(g, u)
        ab = pl.paradiff_apply(lam, pl.paradiff_apply(lam, u, cut, g), cut, g)
        prod.append(sp.l2_norm(g, ab))
        defect.append(sp.l2_norm(g, ab - pl.paradiff_apply(lam2, u, cut, g)))
    p_prod = oracle.slope_fit(list(zip(Ks, prod)))[0]
    p_def = oracle.slope_fit(list(zip(Ks, defect)))[0]
    margin = p_prod - p_def
    ok = props_ok and grid_ok and stable and margin >= 0.5 and p_def <= 1.5
    assert record(8, ok, time.perf_counter() - t, 60,
                  f"cutoff props {props_ok and grid_ok}; L2 constants "
                  f"{consts[0]:.3f}/{consts[1]:.3f}; orders T_aT_b {p_prod:.2f}, "
                  f"defect {p_def:.2f}, margin {margin:.2f}")


def test_criterion_09_paralinearization():
    t = time.perf_counter()
    hg, vg = sp.HGrid(64, 4), sp.VGrid(32, 1.0)
    cut = pl.Cutoff()
    zero = np.zeros(hg.shape)
    delta = 0.9
    om = np.zeros((3, vg.Nw) + hg.shape)
    om[1] = np.cos(12 * hg.X)
    Phi = np.sin(hg.X)

    def residuals(a):
        eta = a * np.cos(hg.X)
        d = make_trivial_diffeo(eta, 1.0, hg, vg)
        sol = gdno(SurfaceState(eta, zero), om, d, velocity=False)
        sf = pl.strip_localize({"A": sol.A, "om": om}, d, delta)
        rII = pl.paralinearized_gII(eta, sf.fields["om"], sf.fields["A"], delta, vg, cut,
                                    G_exact=sol.G_II, grid=hg).residual
        eta = 0.25 * a * np.cos(10 * hg.X)
        d = make_trivial_diffeo(eta, 1.0, hg, vg)
        G = gdno(SurfaceState(eta, Phi), None, d, velocity=False).G_I
        rI = pl.paralinearized_gI(eta, Phi, G, cut, hg).residual
        return rI, rII

    b = residuals(0.0)
    errs = {"I": [], "II": []}
    for a in LADDER:
        rI, rII = residuals(a)
        errs["I"].append(sp.l2_norm(hg, rI - b[0]))
        errs["II"].append(sp.l2_norm(hg, rII - b[1]))
    slopes = {k: oracle.slope_fit(list(zip(LADDER, e)))[0] for k, e in errs.items()}
    ok = all(abs(p - 2) <= 0.4 for p in slopes.values())
    assert record(9, ok, time.perf_counter() - t, 300,
                  f"residual slopes G_I {slopes['I']:.3f}, G_II {slopes['II']:.3f}")


def test_criterion_10_symbol_identities():
    t = time.perf_counter()
    g = sp.HGrid(32, 32)
    eta = 0.2 * np.cos(g.X) + 0.1 * np.sin(g.X + 2 * g.Y) + 0.05 * np.cos(3 * g.Y)
    ex, ey = sp.grad(g, eta)
    gn = 1 + ex**2 + ey**2
    worst_id, worst_el = 0.0, np.inf
    for delta in (0.3, 0.9):
        fac = pl.Factorization(eta, delta, g)
        lam = pl.dno_principal_symbol(eta, g)
        rng = np.random.default_rng(1)
        kx, ky = rng.uniform(-20, 20, (2, 64))
        K = kx[:, None, None], ky[:, None, None]
        # root of the quadratic factorization equation vs the closed form
        m1 = fac.m1_quadratic(*K)
        expect = delta * (1j * (K[0] * ex + K[1] * ey) + lam(kx, ky)) / gn
        worst_id = max(worst_id, float(np.max(np.abs(m1 - expect) / np.maximum(np.abs(expect), 1))))
        bound = delta * np.hypot(*K) / np.max(gn)
        same = np.max(np.abs(m1.real + fac.n1(*K).real))
        worst_el = min(worst_el, float(np.min(m1.real - bound)) if same < 1e-12 else -np.inf)
    ok = worst_id <= 1e-12 and worst_el >= 0
    assert record(10, ok, time.perf_counter() - t, 5,
                  f"identity error {worst_id:.1e}; min(Re m1 - bound) {worst_el:.3e}")


def test_criterion_11_diffeo_admissibility():
    t = time.perf_counter()
    hg, vg = sp.HGrid(32, 32), sp.VGrid(24, 1.0)
    eta = 0.2 * (np.cos(hg.X) + 0.5 * np.sin(2 * hg.Y) + 0.2 * np.cos(3 * hg.X + hg.Y))
    prof = sp.BumpProfile()
    h0 = float(np.min(1.0 + eta))
    bound = regularizing_bound(eta, 1.0, h0, hg, prof)[0]
    rejected = False
    try:
        make_regularizing_diffeo(eta, 1.0, 1.05 * bound, prof, hg, vg)
    except DeltaTooLarge:
        rejected = True
    d = make_regularizing_diffeo(eta, 1.0, 0.95 * bound, prof, hg, vg)
    jmin = float(np.min(1.0 + d.sw))
    ok = rejected and d.c0 > 0 and jmin >= d.c0
    assert record(11, ok, time.perf_counter() - t, 1,
                  f"bound {bound:.4f}; rejected above {rejected}; "
                  f"min(1+d_w sigma) {jmin:.4f} >= c0 {d.c0:.4f}")


if __name__ == "__main__":
    pytest.main([__file__, "-q"])
    for _, line in sorted(REPORT):
        print(line)
