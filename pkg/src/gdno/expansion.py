"""Homogeneous expansion of the generalized DN operator in powers of ``eta``.

Every order is produced by the recursion obtained from the shape
derivative evaluated at ``delta eta = eta`` (Euler's identity for
homogeneous terms).  Truncated power series in a bookkeeping parameter
``eps`` (:class:`Jet`) carry all products such as ``1 / (1 + |grad eta|^2)``.

Only the trivial straightening ``sigma = (1 + w/h) eta`` is supported.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import UnsupportedDiffeo
from .geometry import dw_apply
from .greens import dn_multiplier, green_trace_ops

MAX_ORDER = 6


class Jet:
    """Truncated series ``sum_j eps^j c_j`` with array coefficients."""

    __array_priority__ = 1000

    def __init__(self, coeffs, degree=None):
        coeffs = [np.asarray(c, dtype=float) if not np.iscomplexobj(c) else np.asarray(c)
                  for c in coeffs]
        degree = len(coeffs) - 1 if degree is None else int(degree)
        zero = np.zeros_like(coeffs[0]) if coeffs else 0.0
        self.c = (coeffs + [zero] * (degree + 1 - len(coeffs)))[: degree + 1]

    @property
    def degree(self):
        return len(self.c) - 1

    @classmethod
    def const(cls, value, degree):
        return cls([value], degree)

    @classmethod
    def linear(cls, c0, c1, degree):
        return cls([c0, c1], degree)

    def __getitem__(self, j):
        return self.c[j] if 0 <= j <= self.degree else np.zeros_like(self.c[0])

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.const(other, self.degree)

    def __add__(self, other):
        o = self._coerce(other)
        D = min(self.degree, o.degree)
        return Jet([self.c[j] + o.c[j] for j in range(D + 1)])

    __radd__ = __add__

    def __neg__(self):
        return Jet([-c for c in self.c])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        D = min(self.degree, o.degree)
        return Jet([sum(self.c[i] * o.c[j - i] for i in range(j + 1)) for j in range(D + 1)])

    __rmul__ = __mul__

    def reciprocal(self):
        """``1 / self``; the constant term must be a nonzero constant field."""
        c0 = self.c[0]
        if np.any(c0 == 0):
            raise ZeroDivisionError("jet reciprocal needs a nonvanishing constant term")
        inv0 = 1.0 / c0
        out = [inv0]
        for j in range(1, self.degree + 1):
            out.append(-inv0 * sum(self.c[i] * out[j - i] for i in range(1, j + 1)))
        return Jet(out)

    def map(self, fn):
        """Apply a linear map coefficient-wise (e.g. a Fourier multiplier)."""
        return Jet([fn(c) for c in self.c])

    def scaled(self, lam):
        """Coefficients of ``eps -> lam eps``."""
        return Jet([c * lam**j for j, c in enumerate(self.c)])

    def evaluate(self, eps=1.0):
        return sum(c * eps**j for j, c in enumerate(self.c))


@dataclass
class ExpansionResult:
    G: list
    gamma: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    K: list = field(default_factory=list)
    W: list = field(default_factory=list)

    def total(self, J=None):
        J = len(self.G) - 1 if J is None else J
        return sum(self.G[: J + 1])

    def norms(self, grid):
        return [float(sp.l2_norm(grid, g)) for g in self.G]


def _check_order(J):
    if J < 0 or J > MAX_ORDER:
        raise ValueError(f"expansion order must lie in [0, {MAX_ORDER}]")


def _grid_of(eta, hgrid):
    if hgrid is None:
        n = np.shape(eta)
        hgrid = sp.HGrid(n[0], n[1])
    return hgrid


def g0_I(Phi, h, hgrid=None):
    """Flat DN operator ``|xi| tanh(h |xi|)``."""
    g = _grid_of(Phi, hgrid)
    return sp.apply_multiplier(g, Phi, dn_multiplier(g.kabs, h))


def g0_II(omega, h, hgrid=None, vgrid=None):
    """Flat rotational DN operator on nodal values ``omega`` (3, Nw, Nx, Ny).

    ``div`` of the surface value of the DN-kernel integral of
    ``omega_h^perp``; the ``grad^perp inv_lap(omega_3)`` correction is
    divergence-free and drops out.
    """
    omega = np.asarray(omega, dtype=float)
    g = _grid_of(omega[0, 0], hgrid)
    v = sp.VGrid(omega.shape[1], h) if vgrid is None else vgrid
    ops = green_trace_ops(g, v)
    row = ops["value_dn"][np.searchsorted(ops["k"], g.kabs.ravel())]  # (m, Nw)
    out = []
    for c in (1, 0):
        fh = g.fft(omega[c]).reshape(v.Nw, -1)
        out.append(g.ifft(np.einsum("mj,jm->m", row, fh).reshape(g.kabs.shape)))
    return sp.dx(g, out[0]) - sp.dy(g, out[1])


def _inv_lap(g, u):
    return sp.inv_laplacian(g, u, project=True)


def _slope_jet(g, eta, J):
    """``1 / (1 + eps^2 |grad eta|^2)`` as a jet."""
    ge = sp.grad(g, eta)
    return Jet([np.ones_like(eta), np.zeros_like(eta), ge[0] ** 2 + ge[1] ** 2], J).reciprocal(), ge


class _Irrotational:
    """Orders of ``G_I[eta]`` applied to arbitrary surface data."""

    def __init__(self, eta, h, g):
        self.eta, self.h, self.g = eta, h, g
        self.J = None

    def orders(self, X, J):
        g, eta = self.g, self.eta
        inv, ge = _slope_jet(g, eta, max(J, 0))
        G = [g0_I(X, self.h, g)]
        gX = sp.grad(g, X)
        W = [G[0]]
        for j in range(1, J + 1):
            acc = -sp.div(g, eta * gX) if j == 1 else 0.0
            for hh in range(j):
                acc = acc - self.orders(eta * W[j - 1 - hh], hh)[hh]
            if j >= 2:
                acc = acc + sp.div(g, W[j - 2] * ge * eta)
            G.append(acc / j)
            # W = (G + eps grad eta . grad X) / (1 + eps^2 |grad eta|^2)
            num = Jet(G + [np.zeros_like(X)] * (J - j), J)
            num = num + Jet([np.zeros_like(X), ge[0] * gX[0] + ge[1] * gX[1]], J)
            W = (num * inv).c[: j + 1]
        return G


def gj_I(eta, Phi, h, J, hgrid=None):
    """Orders ``G_{0,I}..G_{J,I}`` of the irrotational expansion."""
    _check_order(J)
    g = _grid_of(eta, hgrid)
    return _Irrotational(np.asarray(eta, float), h, g).orders(np.asarray(Phi, float), J)


def _require_trivial(d):
    if d is not None and d.kind != "trivial":
        raise UnsupportedDiffeo(f"expansions support the trivial map only, got {d.kind!r}")


def gamma_expansion(eta, omega, d=None, J=3, h=None, vgrid=None):
    """Orders ``gamma_0..gamma_J`` of ``d_w^Sigma omega dsigma(eta)``.

    For the trivial map this is ``(1 + w/h) eta d_w omega / (1 + eta/h)``;
    ``gamma_0 = 0``.
    """
    _require_trivial(d)
    v = d.vgrid if d is not None else vgrid
    h = v.h if h is None else h
    eta = np.asarray(eta, float)
    omega = np.asarray(omega, float)
    lin = 1.0 + v.w[:, None, None] / h
    om_w = dw_apply(v.D, omega)
    ratio = Jet([np.ones_like(eta), eta / h], J).reciprocal()  # 1 / (1 + eps eta/h)
    base = Jet([np.zeros_like(om_w), lin * eta * om_w], J)
    return (base * ratio.map(lambda c: c[None, None])).c


class _Rotational:
    """Orders of ``G_II[eta]`` applied to arbitrary nodal vorticity."""

    def __init__(self, eta, g, v):
        self.eta, self.g, self.v = eta, g, v
        self.ge = sp.grad(g, eta)

    def nu(self, X):
        ex, ey = self.ge
        s = X[:, -1]
        return [s[2], -(s[0] * ex + s[1] * ey)]

    def orders(self, X, J, diag=None):
        g, v, eta, ge = self.g, self.v, self.eta, self.ge
        inv, _ = _slope_jet(g, eta, max(J, 0))
        nu = self.nu(X)
        K = [-sp.grad_perp(g, _inv_lap(g, n)) for n in nu]
        gam = gamma_expansion(eta, X, None, J, v.h, v) if J >= 1 else [np.zeros_like(X)]
        G = [g0_II(X, v.h, g, v)]
        W = [G[0]]
        irr = _Irrotational(eta, v.h, g)
        sh = X[:2, -1]
        f1 = -_inv_lap(g, sp.div(g, np.stack([sh[1], -sh[0]]) * eta))
        for j in range(1, J + 1):
            acc = 0.0
            for hh in range(j):
                if np.any(gam[j - hh]):
                    acc = acc - self.orders(gam[j - hh], hh)[hh]
                # harmonic part of the tangential trace, f_m for m = j - hh
                fm = -W[j - hh - 1] * eta + (f1 if j - hh == 1 else 0.0)
                acc = acc + irr.orders(fm, hh)[hh]
            Kj = K[j - 1] if j - 1 < len(K) else 0.0
            flux = Kj - (W[j - 2] * ge if j >= 2 else 0.0)
            acc = acc - sp.div(g, flux * eta)
            if j == 2:
                # constant part of the tangential trace acts as a uniform flow
                c = [g.mean(sh[1] * eta), -g.mean(sh[0] * eta)]
                acc = acc + c[0] * ge[0] + c[1] * ge[1]
            G.append(acc / j)
            # W = (K . grad eta + G) / (1 + eps^2 |grad eta|^2), K of degree <= 1
            num = Jet(G + [np.zeros_like(eta)] * (J - j), J)
            kdot = [np.zeros_like(eta)] + [k[0] * ge[0] + k[1] * ge[1] for k in K]
            num = num + Jet(kdot[: J + 1], J)
            W = (num * inv).c[: j + 1]
        if diag is not None:
            diag.update(gamma=gam, nu=nu, K=K, W=W)
        return G


def gj_II(eta, omega, d=None, h=None, J=2, hgrid=None, vgrid=None, diag=None):
    """Orders ``G_{0,II}..G_{J,II}`` of the rotational expansion."""
    _check_order(J)
    _require_trivial(d)
    if d is not None:
        hgrid, vgrid = d.hgrid, d.vgrid
    omega = np.asarray(omega, float)
    g = _grid_of(eta, hgrid)
    v = sp.VGrid(omega.shape[1], h) if vgrid is None else vgrid
    return _Rotational(np.asarray(eta, float), g, v).orders(omega, J, diag)


def expand(state, omega, d, J):
    """Both expansions with per-order diagnostics."""
    _check_order(J)
    _require_trivial(d)
    GI = gj_I(state.eta, state.Phi, d.h, J, d.hgrid)
    diag = {}
    if omega is None or not np.any(omega):
        GII = [np.zeros_like(state.eta) for _ in range(J + 1)]
    else:
        GII = gj_II(state.eta, omega, d, J=J, diag=diag)
    return ExpansionResult([a + b for a, b in zip(GI, GII)], diag.get("gamma", []),
                           diag.get("nu", []), diag.get("K", []), diag.get("W", []))


def taylor_gdno(state, omega, d, J):
    """``sum_{j <= J} (G_{j,I} + G_{j,II})``."""
    return expand(state, omega, d, J).total()


def dG_II(eta, delta_eta, omega, d, opts=None, form="full"):
    """Shape derivative of ``G_II`` in direction ``delta_eta`` at ``eta``.

    ``d`` must be the straightening of ``eta``; ``omega`` is held fixed on
    the flat strip and should stay ``div^Sigma``-free along the path.

    ``form="full"`` adds ``G_I[eta] f`` with
    ``f = -inv_lap div(omega_h^perp|_0 delta_eta) - W_II delta_eta``, the
    potential flow carrying the gradient part of the tangential trace, and
    ``m . grad eta`` with ``m`` the mean of ``omega_h^perp|_0 delta_eta``
    (its uniform part).  ``form="reduced"`` omits both; the
    finite-difference check shows they are O(1).
    """
    from .solver import (dsigma, g_I_from_trace, g_II_from_A, normal_trace,
                         solve_harmonic_potential, solve_vector_potential)

    if form not in ("full", "reduced"):
        raise ValueError("form must be 'full' or 'reduced'")
    g = d.hgrid
    omega = np.asarray(omega, float)
    delta_eta = np.asarray(delta_eta, float)
    if not np.any(omega) or not np.any(delta_eta):
        return np.zeros(g.shape)
    A = solve_vector_potential(omega, d, opts)
    G = g_II_from_A(d, A)
    ex, ey = d.sx[-1], d.sy[-1]
    K = -sp.grad_perp(g, _inv_lap(g, normal_trace(omega[:, -1], d)))
    W = d.P((d.P(K[0] * ex + K[1] * ey) + G) / (1.0 + ex**2 + ey**2))
    om_w = d.dw(omega)
    gamma = d.P(d.P(d.q * om_w) * dsigma(d, delta_eta))
    G_gamma = g_II_from_A(d, solve_vector_potential(gamma, d, opts)) if np.any(gamma) else 0.0
    flux = np.stack([d.P((K[0] - d.P(W * ex)) * delta_eta),
                     d.P((K[1] - d.P(W * ey)) * delta_eta)])
    out = -G_gamma - sp.div(g, flux)
    if form == "full":
        sh = omega[:2, -1]
        f = -_inv_lap(g, sp.div(g, np.stack([d.P(sh[1] * delta_eta), -d.P(sh[0] * delta_eta)])))
        f = f - d.P(W * delta_eta)
        f = f - g.mean(f)
        _, tr, _ = solve_harmonic_potential(f, d, opts, return_info=True)
        out = out + g_I_from_trace(d, f, tr)
        # the mean of omega_h^perp delta_eta drives a uniform tangential flow
        c = [g.mean(sh[1] * delta_eta), -g.mean(sh[0] * delta_eta)]
        out = out + c[0] * ex + c[1] * ey
    return out
