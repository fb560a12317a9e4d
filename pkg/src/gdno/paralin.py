"""Paradifferential calculus on the torus.

Operators act on real surface fields of shape ``(..., Nx, Ny)``.  The
paradifferential sum is evaluated exactly over mode pairs: for every
input mode ``xi'`` and symbol frequency ``xi1`` with nonzero cutoff the
product lands on the output mode ``xi1 + xi'``.  Nyquist modes are left
out on both sides so real symbols give real outputs, and outputs that
fall outside the grid are dropped rather than aliased.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import spectral as sp
from .errors import DeltaOutOfRange
from .geometry import make_strip_map
from .spectral import BumpProfile

CHUNK = 256


class Cutoff:
    """Admissible cutoff ``chi(xi1, xi2) = (1 - f(|xi2|)) f(|xi1| / |xi2|)``.

    ``f`` equals 1 on ``|t| <= 2 eps1`` and 0 on ``|t| >= eps2``.
    """

    def __init__(self, eps1=0.1, eps2=0.45):
        if not 0 < 2 * eps1 < eps2 < 0.5:
            raise ValueError("need 0 < 2 eps1 < eps2 < 1/2")
        self.eps1, self.eps2 = float(eps1), float(eps2)
        self.f = BumpProfile(2 * self.eps1, self.eps2)

    def __repr__(self):
        return f"Cutoff(eps1={self.eps1:g}, eps2={self.eps2:g})"

    def __eq__(self, other):
        return isinstance(other, Cutoff) and (self.eps1, self.eps2) == (other.eps1, other.eps2)

    def __hash__(self):
        return hash((self.eps1, self.eps2))

    def radial(self, r1, r2):
        """``chi`` as a function of ``|xi1|`` and ``|xi2|``."""
        r1 = np.asarray(r1, dtype=float)
        r2 = np.asarray(r2, dtype=float)
        safe = np.where(r2 > 0, r2, 1.0)
        val = (1.0 - self.f(r2)) * self.f(r1 / safe)
        return np.where(r2 > 0, val, 0.0)

    def __call__(self, xi1, xi2):
        """Evaluate on vectors with the component axis last."""
        return self.radial(np.linalg.norm(xi1, axis=-1), np.linalg.norm(xi2, axis=-1))

    def pairs(self, grid):
        return _pairs(grid, self)

    def check_properties(self, radius=40.0, n=4001, seed=0):
        """Sampled check of the support, derivative and symmetry properties.

        Returns a dict of booleans plus the measured derivative constants.
        """
        rng = np.random.default_rng(seed)
        xi1 = rng.uniform(-radius, radius, (n, 2))
        xi2 = rng.uniform(-radius, radius, (n, 2))
        xi2[: n // 4] *= 0.05  # populate the low-frequency region
        c = self(xi1, xi2)
        r1 = np.linalg.norm(xi1, axis=1)
        r2 = np.linalg.norm(xi2, axis=1)
        one = (r1 <= self.eps1 * r2) & (r2 >= 2)
        zero = (r1 >= self.eps2 * r2) | (r2 <= 2 * self.eps1)
        sym = np.allclose(c, self(-xi1, xi2), atol=0, rtol=0)
        # |d^a_1 d^b_2 chi| <= C (1 + |xi2|)^(-a-b) for a + b = 1
        eps = 1e-6
        g1 = np.zeros(n)
        g2 = np.zeros(n)
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            g1 = np.maximum(g1, np.abs(self(xi1 + e, xi2) - self(xi1 - e, xi2)) / (2 * eps))
            g2 = np.maximum(g2, np.abs(self(xi1, xi2 + e) - self(xi1, xi2 - e)) / (2 * eps))
        C1 = float(np.max(g1 * (1 + r2)))
        C2 = float(np.max(g2 * (1 + r2)))
        return {
            "one": bool(np.all(c[one] == 1.0)),
            "zero": bool(np.all(c[zero] == 0.0)),
            "range": bool(np.all((c >= 0) & (c <= 1))),
            "symmetric": bool(sym),
            "C_xi1": C1,
            "C_xi2": C2,
        }

    def check_on_grid(self, grid):
        """Properties i. and iii. on every lattice pair of ``grid``.

        On the lattice the low-frequency zero set ``|xi2| < 1`` reduces to
        ``xi2 = 0`` when the periods are ``2 pi``.
        """
        k = grid.full_k.reshape(2, -1).T
        r = np.linalg.norm(k, axis=1)
        c = self.radial(r[:, None], r[None, :])  # (xi1, xi2)
        r1, r2 = r[:, None], r[None, :]
        one = (r1 <= self.eps1 * r2) & (r2 >= 2)
        zero = (r1 >= self.eps2 * r2) | (r2 < 1)
        neg = self.radial(np.linalg.norm(-k, axis=1)[:, None], r[None, :])
        return {
            "one": bool(np.all(c[one] == 1.0)),
            "zero": bool(np.all(c[zero] == 0.0)),
            "symmetric": bool(np.array_equal(c, neg)),
        }


@dataclass(frozen=True)
class PairTable:
    """Nonzero cutoff entries: symbol index, input index, output index, weight."""

    j1: np.ndarray
    jp: np.ndarray
    jo: np.ndarray
    chi: np.ndarray
    n_modes: int


def _mode_list(grid):
    px = np.fft.fftfreq(grid.Nx, 1.0 / grid.Nx).astype(int)
    py = np.fft.fftfreq(grid.Ny, 1.0 / grid.Ny).astype(int)
    P, Q = np.meshgrid(px, py, indexing="ij")
    keep = (np.abs(P) < grid.Nx // 2) & (np.abs(Q) < grid.Ny // 2)
    flat = np.flatnonzero(keep.ravel())
    return P.ravel()[flat], Q.ravel()[flat], flat


@lru_cache(maxsize=16)
def _pairs(grid, cutoff):
    p, q, flat = _mode_list(grid)
    kx = 2 * np.pi / grid.Lx * p
    ky = 2 * np.pi / grid.Ly * q
    r = np.hypot(kx, ky)
    out = [], [], [], []
    for s in range(0, len(p), CHUNK):
        sl = slice(s, s + CHUNK)
        chi = cutoff.radial(r[None, :], r[sl, None])  # (input, symbol)
        po = p[sl, None] + p[None, :]
        qo = q[sl, None] + q[None, :]
        ok = (chi > 0) & (np.abs(po) < grid.Nx // 2) & (np.abs(qo) < grid.Ny // 2)
        ii, jj = np.nonzero(ok)
        jo = (po[ii, jj] % grid.Nx) * grid.Ny + (qo[ii, jj] % grid.Ny)
        out[0].append(flat[jj])
        out[1].append(flat[s + ii])
        out[2].append(jo)
        out[3].append(chi[ii, jj])
    cat = [np.concatenate(a) for a in out]
    return PairTable(cat[0], cat[1], cat[2], cat[3], grid.Nx * grid.Ny)


# symbols ------------------------------------------------------------------

@dataclass
class SymbolComponent:
    """One homogeneous piece: ``fn(kx, ky)`` with ``kx, ky`` of shape (m, 1, 1)
    returns the table over the physical grid, shape (m, Nx, Ny)."""

    order: float
    fn: object


class Symbol:
    """Finite sum of homogeneous symbols ``a(x, xi) = sum_j a_{m_j}(x, xi)``."""

    def __init__(self, grid, components, name=""):
        self.grid = grid
        self.components = list(components)
        self.name = name

    def __repr__(self):
        return f"Symbol({self.name or 'a'}, orders={self.orders})"

    @property
    def orders(self):
        return [c.order for c in self.components]

    @property
    def order(self):
        return max(self.orders)

    @classmethod
    def field(cls, grid, a, name=""):
        """Order-0 symbol independent of ``xi`` (a paraproduct)."""
        a = np.asarray(a, dtype=float)
        return cls(grid, [SymbolComponent(0, lambda kx, ky: np.broadcast_to(
            a, kx.shape[:1] + a.shape))], name)

    @classmethod
    def multiplier(cls, grid, fn, order, name=""):
        """``x``-independent symbol from ``fn(kx, ky)``."""
        def table(kx, ky):
            return np.broadcast_to(fn(kx, ky), kx.shape[:1] + grid.shape)
        return cls(grid, [SymbolComponent(order, table)], name)

    def component(self, order):
        return Symbol(self.grid, [c for c in self.components if c.order == order], self.name)

    def __call__(self, kx, ky):
        kx = np.asarray(kx, dtype=float).reshape(-1, 1, 1)
        ky = np.asarray(ky, dtype=float).reshape(-1, 1, 1)
        out = 0
        for c in self.components:
            out = out + c.fn(kx, ky)
        return np.broadcast_to(out, kx.shape[:1] + self.grid.shape)

    def __add__(self, other):
        return Symbol(self.grid, self.components + other.components)

    def scaled(self, s):
        return Symbol(self.grid, [SymbolComponent(c.order, lambda kx, ky, f=c.fn: s * f(kx, ky))
                                  for c in self.components], self.name)

    def check_homogeneity(self, radii=(3.0, 7.0), n_dir=16, rtol=1e-10):
        """Each component satisfies ``a(x, t xi) = t^m a(x, xi)`` at two radii."""
        th = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
        r0, r1 = radii
        for c in self.components:
            a0 = c.fn((r0 * np.cos(th))[:, None, None], (r0 * np.sin(th))[:, None, None])
            a1 = c.fn((r1 * np.cos(th))[:, None, None], (r1 * np.sin(th))[:, None, None])
            a0 = np.broadcast_to(a0, a1.shape)
            if not np.all(np.isfinite(a0)) or not np.all(np.isfinite(a1)):
                return False
            scale = max(np.max(np.abs(a1)), 1e-300)
            if np.max(np.abs(a1 - (r1 / r0) ** c.order * a0)) > rtol * scale:
                return False
        return True


def _as_symbol(a, grid):
    if isinstance(a, Symbol):
        return a
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return Symbol.field(grid, np.full(grid.shape, float(a)))
    return None


def paradiff_apply(a, u, cutoff=None, grid=None):
    """``T_a u`` by exact summation over mode pairs.

    ``a`` is a :class:`Symbol`, a scalar, or a real field of shape
    ``(..., Nx, Ny)`` (paraproduct); field symbols broadcast against the
    leading axes of ``u``.
    """
    cutoff = Cutoff() if cutoff is None else cutoff
    u = np.asarray(u, dtype=float)
    if grid is None:
        grid = a.grid if isinstance(a, Symbol) else sp.HGrid(*u.shape[-2:])
    pt = _pairs(grid, cutoff)
    sym = _as_symbol(a, grid)
    if sym is None:
        af = np.asarray(a, dtype=float)
        lead = np.broadcast_shapes(af.shape[:-2], u.shape[:-2])
        ah = grid.coefficients(np.broadcast_to(af, lead + grid.shape)).reshape(-1, pt.n_modes)
        uh = grid.coefficients(np.broadcast_to(u, lead + grid.shape)).reshape(-1, pt.n_modes)
        vals = ah[:, pt.j1] * uh[:, pt.jp] * pt.chi
        return _scatter(vals, pt.jo, pt.n_modes, lead, grid)
    lead = u.shape[:-2]
    uh = grid.coefficients(u).reshape(-1, pt.n_modes)
    order = np.argsort(pt.jp, kind="stable")
    jp, j1, jo, chi = pt.jp[order], pt.j1[order], pt.jo[order], pt.chi[order]
    used, start = np.unique(jp, return_index=True)
    stop = np.append(start[1:], len(jp))
    kxf, kyf = (k.ravel() for k in grid.full_k)
    acc = np.zeros((uh.shape[0], pt.n_modes), dtype=complex)
    for s in range(0, len(used), CHUNK):
        blk = used[s:s + CHUNK]
        tab = sym(kxf[blk], kyf[blk])
        th = grid.coefficients(tab).reshape(len(blk), pt.n_modes)
        sl = slice(start[s], stop[min(s + CHUNK, len(used)) - 1])
        local = np.searchsorted(blk, jp[sl])
        vals = th[local, j1[sl]] * chi[sl] * uh[:, jp[sl]]
        acc += _bincount(vals, jo[sl], pt.n_modes)
    return grid.from_coefficients(acc.reshape(lead + grid.shape))


def _bincount(vals, idx, n):
    L = vals.shape[0]
    flat = (idx[None, :] + n * np.arange(L)[:, None]).ravel()
    re = np.bincount(flat, weights=vals.real.ravel(), minlength=L * n)
    im = np.bincount(flat, weights=vals.imag.ravel(), minlength=L * n)
    return (re + 1j * im).reshape(L, n)


def _scatter(vals, jo, n, lead, grid):
    acc = _bincount(vals, jo, n)
    return grid.from_coefficients(acc.reshape(lead + grid.shape))


def paraproduct(a, u, cutoff=None, grid=None):
    """``T_a u`` for a field ``a`` (order-0 symbol)."""
    return paradiff_apply(np.asarray(a, dtype=float), u, cutoff, grid)


def paradiff_adjoint(a, v, cutoff=None, grid=None):
    """Adjoint of the paraproduct ``u -> T_a u`` in ``L^2``."""
    cutoff = Cutoff() if cutoff is None else cutoff
    v = np.asarray(v, dtype=float)
    grid = sp.HGrid(*v.shape[-2:]) if grid is None else grid
    pt = _pairs(grid, cutoff)
    ah = grid.coefficients(np.asarray(a, dtype=float)).ravel()
    vh = grid.coefficients(v).reshape(-1, pt.n_modes)
    vals = np.conj(ah[pt.j1]) * pt.chi * vh[:, pt.jo]
    return _scatter(vals, pt.jp, pt.n_modes, v.shape[:-2], grid)


# DN and factorization symbols ----------------------------------------------

def _grad_eta(grid, eta):
    ex, ey = sp.grad(grid, eta)
    return ex, ey, 1.0 + ex**2 + ey**2


def dno_principal_symbol(eta, grid=None):
    """``lambda1 = sqrt((1 + |grad eta|^2) |xi|^2 - (xi . grad eta)^2)``."""
    eta = np.asarray(eta, dtype=float)
    grid = sp.HGrid(*eta.shape) if grid is None else grid
    ex, ey, gn = _grad_eta(grid, eta)

    def lam(kx, ky):
        return np.sqrt(np.maximum(gn * (kx**2 + ky**2) - (kx * ex + ky * ey) ** 2, 0.0))

    return Symbol(grid, [SymbolComponent(1, lam)], "lambda1")


@dataclass
class StripCoefficients:
    """``a, b, c`` of the normalized interior operator on the strip."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def strip_coefficients(eta, delta, grid=None):
    """``a = delta^2/(1+|grad eta|^2)``, ``b = -2 delta grad eta/(...)``, ``c = delta Lap eta/(...)``."""
    eta = np.asarray(eta, dtype=float)
    grid = sp.HGrid(*eta.shape) if grid is None else grid
    ex, ey, gn = _grad_eta(grid, eta)
    a0 = gn / delta**2
    b0 = np.stack([-2 * ex / delta, -2 * ey / delta])
    c0 = sp.laplacian(grid, eta) / delta
    return StripCoefficients(1.0 / a0, b0 / a0, c0 / a0)


class Factorization:
    """Symbols ``M = m1 + m0`` and ``N = n1 + n0`` (scalar times identity).

    The interior operator ``d_w^2 + a Lap + b . grad d_w - c d_w`` equals
    ``(d_w - T_N)(d_w - T_M)`` up to order zero.
    """

    def __init__(self, eta, delta, grid=None):
        eta = np.asarray(eta, dtype=float)
        self.grid = g = sp.HGrid(*eta.shape) if grid is None else grid
        self.eta, self.delta = eta, float(delta)
        self.ex, self.ey, self.gn = _grad_eta(g, eta)
        self.coef = strip_coefficients(eta, delta, g)
        self.lam = dno_principal_symbol(eta, g)

    # pointwise pieces, kx, ky of shape (m, 1, 1) -----------------------
    def m1(self, kx, ky):
        lam = self.lam(kx, ky)
        return self.delta * (1j * (kx * self.ex + ky * self.ey) + lam) / self.gn

    def m1_quadratic(self, kx, ky):
        """Root of ``m^2 + i (b.xi) m - a |xi|^2 = 0`` with positive real part."""
        c = self.coef
        bxi = c.b[0] * kx + c.b[1] * ky
        disc = -(bxi**2) + 4 * c.a * (kx**2 + ky**2)
        return 0.5 * (-1j * bxi + np.sqrt(np.maximum(disc, 0.0)))

    def grad_xi_m1(self, kx, ky):
        lam = self.lam(kx, ky)
        safe = np.where(lam > 0, lam, 1.0)
        xe = kx * self.ex + ky * self.ey
        dl = [np.where(lam > 0, (self.gn * k - xe * e) / safe, 0.0)
              for k, e in ((kx, self.ex), (ky, self.ey))]
        return [self.delta * (1j * e + d) / self.gn for e, d in zip((self.ex, self.ey), dl)]

    def grad_x(self, table):
        g = self.grid
        return sp.dx(g, table.real) + 1j * sp.dx(g, table.imag), \
            sp.dy(g, table.real) + 1j * sp.dy(g, table.imag)

    def m0(self, kx, ky):
        c = self.coef
        m1 = self.m1(kx, ky)
        gx = self.grad_x(m1)
        gxi = self.grad_xi_m1(kx, ky)
        num = (1j * (gxi[0] * gx[0] + gxi[1] * gx[1])
               - (c.b[0] * gx[0] + c.b[1] * gx[1]) + c.c * m1)
        den = 1j * (c.b[0] * kx + c.b[1] * ky) + 2 * m1
        return np.where(np.abs(den) > 0, num / np.where(np.abs(den) > 0, den, 1.0), 0.0)

    def n1(self, kx, ky):
        c = self.coef
        return -1j * (c.b[0] * kx + c.b[1] * ky) - self.m1(kx, ky)

    def n0(self, kx, ky):
        return self.coef.c - self.m0(kx, ky)

    def grad_xi_n1(self, kx, ky):
        c = self.coef
        gm = self.grad_xi_m1(kx, ky)
        return [-1j * c.b[0] - gm[0], -1j * c.b[1] - gm[1]]

    @property
    def M(self):
        return Symbol(self.grid, [SymbolComponent(1, self.m1), SymbolComponent(0, self.m0)], "M")

    @property
    def N(self):
        return Symbol(self.grid, [SymbolComponent(1, self.n1), SymbolComponent(0, self.n0)], "N")

    def kernel(self, z):
        """``exp(-z n1) (1 - i z^2/2 grad_xi n1 . grad_x n1)`` at depth ``z <= 0``."""
        def fn(kx, ky):
            n1 = self.n1(kx, ky)
            gxi = self.grad_xi_n1(kx, ky)
            gx = self.grad_x(n1)
            corr = 1.0 - 0.5j * z**2 * (gxi[0] * gx[0] + gxi[1] * gx[1])
            return np.exp(-z * n1) * corr
        return Symbol(self.grid, [SymbolComponent(0, fn)], "E")

    def composition_defect(self, kx, ky):
        """Order-one part of ``N # M + a |xi|^2``; zero by construction of ``m0``."""
        n1 = self.n1(kx, ky)
        gxi = self.grad_xi_n1(kx, ky)
        gx = self.grad_x(self.m1(kx, ky))
        return (n1 * self.m0(kx, ky) + self.n0(kx, ky) * self.m1(kx, ky)
                - 1j * (gxi[0] * gx[0] + gxi[1] * gx[1]))

    def ellipticity_margin(self, kx, ky):
        """``min Re m1 - delta |xi| / (1 + max |grad eta|^2)`` over the samples."""
        bound = self.delta * np.hypot(kx, ky) / (1.0 + np.max(self.gn - 1.0))
        return float(np.min(self.m1(kx, ky).real - bound))


def factorization_symbols(eta, delta, grid=None):
    """``(M, N)`` at orders one and zero."""
    f = Factorization(eta, delta, grid)
    return f.M, f.N


# strip localization --------------------------------------------------------

@dataclass
class StripFields:
    """Fields resampled to ``z = delta w + eta`` on the solver's vertical nodes."""

    fields: dict
    delta: float
    d: object


def _sigma_nodes(d, delta, target=None):
    """Straightened coordinate ``w_S`` with ``w_S + sigma(w_S) = delta w + eta``."""
    vg, eta, h = d.vgrid, d.eta, d.h
    z = delta * vg.w[:, None, None] + eta if target is None else target
    if d.kind == "trivial":
        return (z - eta) / (1.0 + eta / h)
    ws = (z - eta) / (1.0 + eta / h)
    for _ in range(50):
        S = _column_interp(d.sigma, ws, vg)
        Sw = _column_interp(d.sw, ws, vg)
        step = (ws + S - z) / (1.0 + Sw)
        ws = np.clip(ws - step, -h, 0.0)
        if np.max(np.abs(step)) < 1e-14 * h:
            break
    return ws


def _column_interp(f, pts, vg):
    """Interpolate strip fields ``f[..., Nw, Nx, Ny]`` to per-column points ``pts[k, Nx, Ny]``."""
    f = np.asarray(f, dtype=float)
    nodes = vg.w
    n = len(nodes)
    lam = (-1.0) ** np.arange(n)
    lam[0] *= 0.5
    lam[-1] *= 0.5
    diff = pts[:, None] - nodes[None, :, None, None]  # (k, n, Nx, Ny)
    hit = np.abs(diff) < 1e-14 * (1 + vg.h)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = lam[None, :, None, None] / np.where(hit, 1.0, diff)
    q = np.where(hit.any(axis=1, keepdims=True), hit.astype(float), q)
    W = q / q.sum(axis=1, keepdims=True)
    return np.einsum("kjxy,...jxy->...kxy", W, f)


def strip_localize(sources, d, delta, h0=None):
    """Resample straightened strip fields to the ``delta``-strip below the surface.

    ``sources`` is a dict of fields ``(..., Nw, Nx, Ny)`` on the nodes of
    ``d``.  Returns :class:`StripFields` whose ``d`` is the affine strip
    map providing ``d^rho`` derivatives.
    """
    h0 = float(np.min(d.h + d.eta)) if h0 is None else h0
    if not 0 < delta <= h0 / d.h:
        raise DeltaOutOfRange(f"delta = {delta:g} outside (0, {h0 / d.h:.4g}]")
    ws = _sigma_nodes(d, delta)
    out = {k: _column_interp(v, ws, d.vgrid) for k, v in sources.items()}
    strip = make_strip_map(d.eta, d.h, delta, d.hgrid, d.vgrid, h0=h0, dealias=False)
    return StripFields(out, float(delta), strip)


def strip_to_sigma(fields, d, delta):
    """Inverse of :func:`strip_localize` on the straightened nodes of ``d``.

    Nodes lying below the strip are not covered and come back as NaN.
    """
    vg = d.vgrid
    z = vg.w[:, None, None] + d.sigma
    w_strip = (z - d.eta) / delta
    outside = w_strip < -vg.h * (1 + 1e-12)
    w_strip = np.maximum(w_strip, -vg.h)
    return {k: np.where(outside, np.nan, _column_interp(v, w_strip, vg))
            for k, v in fields.items()}


# good unknown, source term and paralinearized operators ------------------------

def _dw(vg, f):
    return np.moveaxis(np.tensordot(vg.D, f, axes=([1], [-3])), 0, -3)


def _rho_derivs(f, eta, delta, grid, vg):
    """``(d_x^rho, d_y^rho, d_w^rho)`` of strip fields."""
    ex, ey = sp.grad(grid, eta)
    fw = _dw(vg, f)
    return (sp.dx(grid, f) - ex * fw / delta, sp.dy(grid, f) - ey * fw / delta, fw / delta)


def good_unknown(A_hat, eta, delta, vgrid, cutoff=None, grid=None):
    """``B = A - T_{d_w^rho A} eta`` at every vertical node."""
    eta = np.asarray(eta, dtype=float)
    grid = sp.HGrid(*eta.shape) if grid is None else grid
    Aw = _dw(vgrid, A_hat) / delta
    return A_hat - paraproduct(Aw, eta, cutoff, grid)


def f0_term(eta, om_hat, A_hat, delta, vgrid, cutoff=None, grid=None):
    """Source of the factorized equation for the good unknown, term by term."""
    eta = np.asarray(eta, dtype=float)
    g = sp.HGrid(*eta.shape) if grid is None else grid
    c = cutoff
    co = strip_coefficients(eta, delta, g)
    am1 = co.a - 1.0
    T = lambda a, u: paraproduct(a, u, c, g)  # noqa: E731
    ex, ey = sp.grad(g, eta)
    Aw = _dw(vgrid, A_hat)
    Aww = _dw(vgrid, Aw)
    Awr = Aw / delta  # d_w^rho A
    out = -T(am1, om_hat) - T(om_hat, am1)
    out = out + T(co.a * _dw(vgrid, om_hat) / delta, eta)
    # the commutator of d_w^rho with the interior operator vanishes:
    # its coefficients do not depend on w
    inner = T(sp.laplacian(g, Awr), eta) + 2 * (T(sp.dx(g, Awr), ex) + T(sp.dy(g, Awr), ey))
    out = out - (inner + T(am1, inner))
    Awwr = Aww / delta
    out = out - (T(co.b[0], T(Awwr, ex)) + T(co.b[1], T(Awwr, ey)))
    out = out - T(sp.laplacian(g, A_hat), am1)
    out = out - (T(sp.dx(g, Aw), co.b[0]) + T(sp.dy(g, Aw), co.b[1]))
    out = out + T(Aw, co.c)
    return out


class LambdaII:
    """Operator row ``T_{1+|grad eta|^2}[d_x B2 - d_y B1 + (T_{eta_y} T_M B1 - T_{eta_x} T_M B2)/delta]``.

    The row combines paradifferential applications, so it is kept as an
    operator; :meth:`table` gives its pointwise principal symbol.
    """

    def __init__(self, eta, M, delta, cutoff=None, grid=None):
        self.eta = np.asarray(eta, dtype=float)
        self.grid = g = M.grid if grid is None else grid
        self.M, self.delta, self.cutoff = M, float(delta), cutoff
        self.ex, self.ey = sp.grad(g, self.eta)
        self.gn = 1.0 + self.ex**2 + self.ey**2

    def table(self, kx, ky):
        """Pointwise row ``(1+|grad eta|^2)(-i xi2 + eta_y m/delta, i xi1 - eta_x m/delta, 0)``."""
        kx = np.asarray(kx, dtype=float).reshape(-1, 1, 1)
        ky = np.asarray(ky, dtype=float).reshape(-1, 1, 1)
        m = self.M(kx, ky)
        zero = np.zeros_like(m)
        return np.stack([self.gn * (-1j * ky + self.ey * m / self.delta),
                         self.gn * (1j * kx - self.ex * m / self.delta), zero])

    def as_symbol(self):
        """Principal row as three order-one scalar symbols."""
        comps = []
        for i in range(3):
            def fn(kx, ky, i=i):
                return self.table(kx, ky)[i].reshape(kx.shape[:1] + self.grid.shape)
            comps.append(Symbol(self.grid, [SymbolComponent(1, fn)], f"lambda_II[{i}]"))
        return comps

    def apply(self, B_top):
        g, c = self.grid, self.cutoff
        TM = paradiff_apply(self.M, B_top[:2], c, g)
        inner = (sp.dx(g, B_top[1]) - sp.dy(g, B_top[0])
                 + (paraproduct(self.ey, TM[0], c, g) - paraproduct(self.ex, TM[1], c, g))
                 / self.delta)
        return paraproduct(self.gn, inner, c, g)


def lambda_II_symbol(eta, M, delta, cutoff=None, grid=None):
    return LambdaII(eta, M, delta, cutoff, grid)


def source_integral(fac, F, vgrid, cutoff=None):
    """``f = int_{-h}^0 (T_E F)_h dw`` with the kernel of :meth:`Factorization.kernel`."""
    g = fac.grid
    out = np.zeros((2,) + g.shape)
    for k, (w, wt) in enumerate(zip(vgrid.w, vgrid.weights)):
        if wt == 0:
            continue
        out += wt * paradiff_apply(fac.kernel(w), F[:2, k], cutoff, g)
    return out


@dataclass
class ParalinResult:
    value: np.ndarray
    residual: np.ndarray
    terms: dict


def paralinearized_gII(eta, om_hat, A_hat, delta, vgrid, cutoff=None, G_exact=None,
                       grid=None, forcing=True):
    """Paralinearized rotational DN operator and its residual.

    ``forcing`` adds ``-om_hat`` to the source before integration: the
    interior equation reads ``E A = -a om``, and only ``(a - 1) om``
    is paralinearized inside :func:`f0_term`.
    """
    eta = np.asarray(eta, dtype=float)
    g = sp.HGrid(*eta.shape) if grid is None else grid
    c = cutoff
    T = lambda a, u: paraproduct(a, u, c, g)  # noqa: E731
    fac = Factorization(eta, delta, g)
    ex, ey, gn = fac.ex, fac.ey, fac.gn
    B = good_unknown(A_hat, eta, delta, vgrid, c, g)
    lam = LambdaII(eta, fac.M, delta, c, g)
    t_lam = lam.apply(B[:, -1])

    F = f0_term(eta, om_hat, A_hat, delta, vgrid, c, g)
    if forcing:
        F = F - om_hat
    f = source_integral(fac, F, vgrid, c)
    t_src = T(gn, T(ey, f[0]) - T(ex, f[1])) / delta

    Aw = _dw(vgrid, A_hat)
    Aww = _dw(vgrid, Aw)
    top = lambda u: u[..., -1, :, :]  # noqa: E731
    A2xw, A1yw = sp.dx(g, top(Aw[1])), sp.dy(g, top(Aw[0]))
    A2ww, A1ww = top(Aww[1]), top(Aww[0])
    t_geo = T(gn, (T(A2xw, eta) - T(A1yw, eta)) / delta
              + (-T(ex, T(A2ww, eta)) + T(ey, T(A1ww, eta))) / delta**2)

    dxr, dyr, dwr = (top(t) for t in _rho_derivs(A_hat, eta, delta, g, vgrid))
    curl = np.stack([dyr[2] - dwr[1], dwr[0] - dxr[2], dxr[1] - dyr[0]])
    V, W = curl[:2], curl[2]
    t_vel = -(T(ex, V[0]) + T(ey, V[1])) - (T(V[0], ex) + T(V[1], ey)) - T(gn - 1.0, W)

    value = t_lam + t_src + t_geo + t_vel
    if G_exact is None:
        G_exact = g_II_direct(A_hat, eta, g)
    terms = {"lambda": t_lam, "source": t_src, "geometry": t_geo, "velocity": t_vel}
    return ParalinResult(value, G_exact - value, terms)


def g_II_direct(A_hat, eta, grid):
    """``d_x A2 + eta_y d_x A3 - d_y A1 - eta_x d_y A3`` at the surface."""
    ex, ey = sp.grad(grid, eta)
    A = A_hat[:, -1]
    return (sp.dx(grid, A[1]) + ey * sp.dx(grid, A[2])
            - sp.dy(grid, A[0]) - ex * sp.dy(grid, A[2]))


def paralinearized_gI(eta, Phi, G, cutoff=None, grid=None):
    """``T_lambda1(Phi - T_W eta) - T_V . grad eta - T_{div V} eta`` and ``G - value``."""
    eta = np.asarray(eta, dtype=float)
    g = sp.HGrid(*eta.shape) if grid is None else grid
    c = cutoff
    T = lambda a, u: paraproduct(a, u, c, g)  # noqa: E731
    ex, ey, gn = _grad_eta(g, eta)
    gP = sp.grad(g, Phi)
    W = (G + ex * gP[0] + ey * gP[1]) / gn
    V = gP - W * np.stack([ex, ey])
    good = Phi - T(W, eta)
    t_lam = paradiff_apply(dno_principal_symbol(eta, g), good, c, g)
    t_vel = -(T(V[0], ex) + T(V[1], ey)) - T(sp.div(g, V), eta)
    value = t_lam + t_vel
    return ParalinResult(value, G - value, {"lambda": t_lam, "velocity": t_vel})


def operator_norm(apply, adjoint, shape, iters=40, seed=0):
    """Largest singular value of a real linear map by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(iters):
        y = adjoint(apply(x))
        n = np.linalg.norm(y)
        if n == 0:
            return 0.0
        s = np.sqrt(n)
        x = y / n
    return float(s)
