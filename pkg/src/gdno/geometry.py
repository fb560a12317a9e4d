"""Straightening maps of the fluid layer and the flattened operators.

A straightening map sends the flat strip ``T^2 x [-h, 0]`` onto the fluid
domain through ``z = w + sigma(x, w)``.  Derivatives of ``sigma`` are
cached at construction; every flattened operator reads from the cache.
Pointwise products are truncated with the 2/3 rule.
"""

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .errors import DeltaOutOfRange, DeltaTooLarge, StrictConnectednessViolated

JACOBIAN_FLOOR = 1e-6


def check_strict_connectedness(eta, h, h0):
    """True iff ``h + eta >= h0`` on every grid point."""
    return bool(np.min(h + np.asarray(eta)) >= h0)


def dw_apply(D, f):
    """Apply a vertical matrix along the strip axis (third from last)."""
    f = np.asarray(f)
    shp = f.shape
    out = np.matmul(D, f.reshape(shp[:-3] + (shp[-3], -1)))
    return out.reshape(shp[:-3] + (D.shape[0],) + shp[-2:])


@dataclass
class FlatCoeffs:
    """Coefficients of the flattened Laplacian.

    ``a d_ww + Delta + b . grad d_w - c d_w`` and the symmetric matrix
    ``P`` of the divergence form ``(1 + d_w sigma)^-1 div(P grad)``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    P: np.ndarray


class Diffeo:
    """Straightening map with cached derivative fields.

    Build instances with :func:`make_trivial_diffeo`,
    :func:`make_regularizing_diffeo` or :func:`make_strip_map`.
    """

    def __init__(self, kind, hgrid, vgrid, eta, h, sigma, sx, sy, sw, sww, sxw, syw,
                 lap_sigma, delta=None, profile=None, wnodes=None, dealias=True):
        self.kind = kind
        self.hgrid = hgrid
        self.vgrid = vgrid
        self.eta = np.asarray(eta, dtype=float)
        self.h = float(h)
        self.sigma, self.sx, self.sy = sigma, sx, sy
        self.sw, self.sww, self.sxw, self.syw = sw, sww, sxw, syw
        self.lap_sigma = lap_sigma
        self.delta = delta
        self.profile = profile
        self.w = vgrid.w if wnodes is None else np.asarray(wnodes, dtype=float)
        self.dealias = dealias
        self.jac = 1.0 + sw
        self.jac_min = float(np.min(self.jac))
        if self.jac_min < JACOBIAN_FLOOR:
            raise StrictConnectednessViolated(
                f"min(1 + d_w sigma) = {self.jac_min:.3e} below {JACOBIAN_FLOOR:g}")
        self.q = 1.0 / self.jac
        self.c0 = None
        self._coeffs = None

    def __repr__(self):
        extra = f", delta={self.delta:g}" if self.delta is not None else ""
        return f"Diffeo(kind={self.kind!r}, h={self.h:g}{extra}, {self.hgrid!r})"

    @property
    def is_flat(self):
        return not np.any(self.eta) and self.kind != "strip"

    def P(self, u):
        """Truncate a pointwise product."""
        return sp.dealias(self.hgrid, u) if self.dealias else u

    def dw(self, f):
        return dw_apply(self.vgrid.D, f)

    def dww(self, f):
        return dw_apply(self.vgrid.D2, f)

    def surface(self, f):
        return np.asarray(f)[..., -1, :, :]

    def bottom(self, f):
        return np.asarray(f)[..., 0, :, :]

    # flattened first derivatives -------------------------------------
    def d_sigma(self, f, j, fw=None):
        """``d_j^Sigma f`` for ``j`` in 0 (x), 1 (y), 2 (w)."""
        g = self.hgrid
        fw = self.dw(f) if fw is None else fw
        if j == 2:
            return fw - self.P(self.sw * self.q * fw)
        flat = sp.dx(g, f) if j == 0 else sp.dy(g, f)
        s = self.sx if j == 0 else self.sy
        return flat - self.P(s * self.q * fw)

    def coeffs(self):
        if self._coeffs is None:
            q = self.q
            gs2 = self.sx**2 + self.sy**2
            a = (1.0 + gs2) * q**2
            b = np.stack([-2 * self.sx * q, -2 * self.sy * q])
            c = (self.lap_sigma + b[0] * self.sxw + b[1] * self.syw + a * self.sww) * q
            J = self.jac
            P = np.empty((3, 3) + J.shape)
            P[0, 0] = P[1, 1] = J
            P[0, 1] = P[1, 0] = 0.0
            P[0, 2] = P[2, 0] = -self.sx
            P[1, 2] = P[2, 1] = -self.sy
            P[2, 2] = (1.0 + gs2) * q
            self._coeffs = FlatCoeffs(a, b, c, P)
        return self._coeffs

    def lap_correction(self, f, fw=None, fww=None):
        """``Delta^Sigma f - Delta f`` in coefficient form."""
        g = self.hgrid
        C = self.coeffs()
        fw = self.dw(f) if fw is None else fw
        fww = self.dww(f) if fww is None else fww
        fwh = g.fft(fw)
        fxw = g.ifft(1j * g.kx_odd * fwh)
        fyw = g.ifft(1j * g.ky_odd * fwh)
        return self.P((C.a - 1.0) * fww + C.b[0] * fxw + C.b[1] * fyw - C.c * fw)


def _finish(kind, eta, h, hgrid, vgrid, h0, sig, sig_w, sig_ww, **kw):
    """Assemble horizontal derivatives spectrally and build the Diffeo."""
    eta = np.asarray(eta, dtype=float)
    if h0 is not None and not check_strict_connectedness(eta, h, h0):
        raise StrictConnectednessViolated(
            f"min(h + eta) = {np.min(h + eta):.4g} below h0 = {h0:g}")
    g = hgrid
    sh = g.fft(sig)
    swh = g.fft(sig_w)
    sx = g.ifft(1j * g.kx_odd * sh)
    sy = g.ifft(1j * g.ky_odd * sh)
    lap = g.ifft(-g.k2 * sh)
    sxw = g.ifft(1j * g.kx_odd * swh)
    syw = g.ifft(1j * g.ky_odd * swh)
    return Diffeo(kind, hgrid, vgrid, eta, h, sig, sx, sy, sig_w, sig_ww, sxw, syw, lap, **kw)


def _nodes(vgrid, wnodes):
    return vgrid.w if wnodes is None else np.asarray(wnodes, dtype=float)


def make_trivial_diffeo(eta, h, hgrid, vgrid, h0=None, wnodes=None, dealias=True):
    """``sigma = (1 + w/h) eta`` with exact derivative fields."""
    eta = np.asarray(eta, dtype=float)
    w = _nodes(vgrid, wnodes)[:, None, None]
    lin = 1.0 + w / h
    sig = lin * eta
    sig_w = np.broadcast_to(eta / h, sig.shape).copy()
    sig_ww = np.zeros_like(sig)
    return _finish("trivial", eta, h, hgrid, vgrid, h0, sig, sig_w, sig_ww,
                   wnodes=wnodes, dealias=dealias)


def smoothing_constant(hgrid, profile, s=3.0):
    """Discrete analogue of ``||chi'||_inf (int (1+|xi|^2)^-(s-1))^(1/2)``."""
    kx, ky = hgrid.full_k
    total = np.sum((1.0 + kx**2 + ky**2) ** (-(s - 1.0)))
    return profile.sup_d1() * np.sqrt(total)


def regularizing_bound(eta, h, h0, hgrid, profile, s=3.0):
    """Largest admissible ``delta`` and the constant entering it."""
    C = smoothing_constant(hgrid, profile, s)
    nrm = sp.sobolev_norm(hgrid, eta, s)
    bound = np.inf if nrm == 0 else h0 / (h * C * nrm)
    return bound, C, nrm


def make_regularizing_diffeo(eta, h, delta, profile, hgrid, vgrid, h0=None, s=3.0,
                             wnodes=None, dealias=True):
    """``sigma = (1 + w/h) chi(delta w |D|) eta``.

    ``h0`` defaults to ``min(h + eta)``.  Raises DeltaTooLarge when
    ``delta`` is not below ``h0 / (h C(chi) ||eta||_{H^s})``.  The
    attribute ``c0 = h0/h - delta C(chi) ||eta||_{H^s}`` is the certified
    lower bound of ``1 + d_w sigma``.
    """
    eta = np.asarray(eta, dtype=float)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if h0 is None:
        h0 = float(np.min(h + eta))
    bound, C, nrm = regularizing_bound(eta, h, h0, hgrid, profile, s)
    if not delta < bound:
        raise DeltaTooLarge(f"delta = {delta:g} not below admissibility bound {bound:.4g}")
    g = hgrid
    w = _nodes(vgrid, wnodes)[:, None, None]
    eh = g.fft(eta)
    arg = delta * w * g.kabs
    e0 = g.ifft(profile(arg) * eh)
    e1 = g.ifft(delta * g.kabs * profile.d1(arg) * eh)
    e2 = g.ifft((delta * g.kabs) ** 2 * profile.d2(arg) * eh)
    lin = 1.0 + w / h
    sig = lin * e0
    if wnodes is None:
        # differentiate the sampled map so flattened operators stay consistent
        sig_w = dw_apply(vgrid.D, sig)
        sig_ww = dw_apply(vgrid.D2, sig)
    else:
        sig_w = e0 / h + lin * e1
        sig_ww = 2.0 * e1 / h + lin * e2
    d = _finish("regularizing", eta, h, hgrid, vgrid, h0, sig, sig_w, sig_ww,
                delta=float(delta), profile=profile, wnodes=wnodes, dealias=dealias)
    d.c0 = h0 / h - delta * C * nrm
    d.h0 = h0
    return d


def make_strip_map(eta, h, delta, hgrid, vgrid, h0=None, wnodes=None, dealias=True):
    """Affine localizing map ``z = delta w + eta`` onto the strip below the surface.

    Requires ``0 < delta <= h0/h``; ``h0`` defaults to ``min(h + eta)``.  The
    endpoint is admitted: the strip then touches the bottom at its lowest point.
    """
    eta = np.asarray(eta, dtype=float)
    if h0 is None:
        h0 = float(np.min(h + eta))
    if not 0 < delta <= h0 / h:
        raise DeltaOutOfRange(f"delta = {delta:g} outside (0, {h0 / h:.4g}]")
    w = _nodes(vgrid, wnodes)[:, None, None]
    sig = (delta - 1.0) * w + eta
    sig_w = np.full(sig.shape, delta - 1.0)
    sig_ww = np.zeros_like(sig)
    d = _finish("strip", eta, h, hgrid, vgrid, None, sig, sig_w, sig_ww,
                delta=float(delta), wnodes=wnodes, dealias=dealias)
    return d


# operators ------------------------------------------------------------

def flat_grad(f, d):
    fw = d.dw(f)
    return np.stack([d.d_sigma(f, 0, fw), d.d_sigma(f, 1, fw), d.d_sigma(f, 2, fw)])


def flat_div(F, d):
    return d.d_sigma(F[0], 0) + d.d_sigma(F[1], 1) + d.d_sigma(F[2], 2)


def flat_curl(F, d):
    Fw = d.dw(F)
    ds = d.d_sigma
    return np.stack([
        ds(F[2], 1, Fw[2]) - ds(F[1], 2, Fw[1]),
        ds(F[0], 2, Fw[0]) - ds(F[2], 0, Fw[2]),
        ds(F[1], 0, Fw[1]) - ds(F[0], 1, Fw[0]),
    ])


def flat_coeffs(d):
    return d.coeffs()


def flat_laplacian(f, d, form="coefficient"):
    """Flattened Laplacian in coefficient form or divergence form."""
    g = d.hgrid
    if form == "coefficient":
        return sp.laplacian(g, f) + d.dww(f) + d.lap_correction(f)
    if form != "divergence":
        raise ValueError("form must be 'coefficient' or 'divergence'")
    P = d.P
    fx, fy, fw = sp.dx(g, f), sp.dy(g, f), d.dw(f)
    gs2 = d.sx**2 + d.sy**2
    F1 = fx + P(d.sw * fx - d.sx * fw)
    F2 = fy + P(d.sw * fy - d.sy * fw)
    F3 = fw + P(-d.sx * fx - d.sy * fy + ((1.0 + gs2) * d.q - 1.0) * fw)
    inner = sp.dx(g, F1) + sp.dy(g, F2) + d.dw(F3)
    return inner + P((d.q - 1.0) * inner)
