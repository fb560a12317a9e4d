"""Mode-wise Green kernels of ``|xi|^2 - d_w^2`` on the flat strip.

Two scalar kernels cover both systems:

* ``DN``: Dirichlet at ``w = -h`` and Neumann at ``w = 0`` (horizontal
  components of the vector potential),
* ``ND``: Neumann at ``w = -h`` and Dirichlet at ``w = 0`` (vertical
  component and the harmonic potential).

Hyperbolic ratios are evaluated as products of decaying exponentials so
that every table stays finite for ``|xi| h`` up to several hundred.  The
zero mode uses the ``|xi| -> 0`` limit of the same expressions.
Integrals over ``zeta`` are split at ``zeta = w`` into two smooth panels,
each integrated by Clenshaw-Curtis on the Chebyshev interpolant of the
data.
"""

from functools import lru_cache

import numpy as np

from . import spectral as sp


def _s(k, t):
    """``(1 - exp(-2 k t)) / (2 k)`` with its ``k -> 0`` limit ``t``."""
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    kk = np.where(k > 0, k, 1.0)
    return np.where(k > 0, -np.expm1(-2.0 * kk * t) / (2.0 * kk), t)


def _den(k, h):
    return 1.0 + np.exp(-2.0 * k * h)


def kernel_dn(k, w, zeta, h):
    """``sinh(k(min+h)) cosh(k max) / (k cosh(kh))``."""
    mn, mx = np.minimum(w, zeta), np.maximum(w, zeta)
    return (np.exp(-k * np.abs(w - zeta)) * _s(k, mn + h)
            * (1.0 + np.exp(2.0 * k * mx)) / _den(k, h))


def kernel_nd(k, w, zeta, h):
    """``-cosh(k(min+h)) sinh(k max) / (k cosh(kh))``."""
    mn, mx = np.minimum(w, zeta), np.maximum(w, zeta)
    return (np.exp(-k * np.abs(w - zeta)) * (1.0 + np.exp(-2.0 * k * (mn + h)))
            * _s(k, -mx) / _den(k, h))


def kernel_A(k, w, zeta, h):
    """3x3 Green matrix of the vector-potential system (diagonal)."""
    dn = kernel_dn(k, w, zeta, h)
    nd = kernel_nd(k, w, zeta, h)
    return np.array([[dn, 0.0, 0.0], [0.0, dn, 0.0], [0.0, 0.0, nd]])


def kernel_phi(k, w, zeta, h):
    return kernel_nd(k, w, zeta, h)


def top_neumann_dn(k, w, h):
    """``sinh(k(w+h)) / (k cosh(kh))``: unit Neumann data at the surface."""
    return np.exp(k * w) * 2.0 * _s(k, w + h) / _den(k, h)


def top_dirichlet_nd(k, w, h):
    """``cosh(k(w+h)) / cosh(kh)``: unit Dirichlet data at the surface."""
    return np.exp(k * w) * (1.0 + np.exp(-2.0 * k * (w + h))) / _den(k, h)


def bottom_neumann_nd(k, w, h):
    """``sinh(k w) / (k cosh(kh))``: unit Neumann data at the bottom."""
    return -np.exp(-k * (w + h)) * 2.0 * _s(k, -w) / _den(k, h)


def surface_dw_nd(k, zeta, h):
    """``d_w`` of the ND kernel at ``w = 0``: ``-cosh(k(zeta+h)) / cosh(kh)``."""
    return -np.exp(k * zeta) * (1.0 + np.exp(-2.0 * k * (zeta + h))) / _den(k, h)


def dn_multiplier(k, h):
    """``k tanh(kh)``."""
    return k * (1.0 - np.exp(-2.0 * k * h)) / _den(k, h)


def sech(k, h):
    return 2.0 * np.exp(-k * h) / _den(k, h)


class GreenOperator:
    """Precomputed quadrature tables for one pair of grids.

    Args:
        hgrid: horizontal grid.
        vgrid: vertical Chebyshev grid.
        nq: Clenshaw-Curtis points per panel (default ``Nw + 16``).
    """

    def __init__(self, hgrid, vgrid, nq=None):
        self.hgrid, self.vgrid = hgrid, vgrid
        h = vgrid.h
        Nw = vgrid.Nw
        nq = Nw + 16 if nq is None else nq
        kflat = hgrid.kabs.ravel()
        self.kvals, self.kinv = np.unique(kflat, return_inverse=True)
        k = self.kvals[:, None, None]

        t = -np.cos(np.pi * np.arange(nq) / (nq - 1))
        cw = sp.clenshaw_curtis(nq)
        w = vgrid.w
        lo_len = w + h
        up_len = -w
        z_lo = -h + lo_len[:, None] * (1 + t[None, :]) / 2
        z_up = w[:, None] + up_len[:, None] * (1 + t[None, :]) / 2
        zeta = np.concatenate([z_lo, z_up], axis=1)
        wts = np.concatenate([lo_len[:, None] * cw / 2, up_len[:, None] * cw / 2], axis=1)
        L = np.stack([vgrid.interp_matrix(zeta[i]) for i in range(Nw)])
        Lw = L * wts[:, :, None]
        ww = w[None, :, None]
        zz = zeta[None, :, :]
        kdn = kernel_dn(k, ww, zz, h)
        knd = kernel_nd(k, ww, zz, h)
        # (Nw, nk, 2nq) @ (Nw, 2nq, Nw) -> (nk, Nw, Nw)
        self.M_dn = np.matmul(kdn.transpose(1, 0, 2), Lw).transpose(1, 0, 2)
        self.M_nd = np.matmul(knd.transpose(1, 0, 2), Lw).transpose(1, 0, 2)

        # surface normal-derivative row of the ND volume term
        zf = zeta[-1, :nq]
        Lf = L[-1, :nq] * wts[-1, :nq, None]
        self.row_nd = surface_dw_nd(self.kvals[:, None], zf[None, :], h) @ Lf

        kv = self.kvals[:, None]
        self.b_dn = top_neumann_dn(kv, w[None, :], h)
        self.b_nd_top = top_dirichlet_nd(kv, w[None, :], h)
        self.b_nd_bot = bottom_neumann_nd(kv, w[None, :], h)
        self.dn_mult = dn_multiplier(self.kvals, h)
        self.sech = sech(self.kvals, h)
        self._gathered = {}

    # mode bookkeeping --------------------------------------------------
    def _modes(self, uh):
        """Reshape half-spectrum coefficients to (..., n_modes)."""
        return uh.reshape(uh.shape[:-2] + (-1,))

    def _unmodes(self, v):
        return v.reshape(v.shape[:-1] + self.hgrid.kabs.shape)

    def _per_mode(self, table):
        return table[self.kinv]

    def _volume(self, name, fh):
        """Apply the (nk, Nw, Nw) tables to coefficients of shape (Nw, Nx, Nyh)."""
        if name not in self._gathered:
            M = self.M_dn if name == "dn" else self.M_nd
            self._gathered[name] = M[self.kinv]
        G = self._gathered[name]
        f = self._modes(fh)  # (Nw, m)
        rhs = np.stack([f.real.T, f.imag.T], axis=-1)  # (m, Nw, 2)
        out = np.matmul(G, rhs)
        return self._unmodes((out[..., 0] + 1j * out[..., 1]).T)

    def _bvec(self, table, ch):
        """Boundary profile (nk, Nw) times surface coefficients (Nx, Nyh)."""
        prof = self._per_mode(table).T  # (Nw, m)
        return self._unmodes(prof * self._modes(ch)[None, :])

    def _mult(self, table, ch):
        return self._unmodes(self._per_mode(table) * self._modes(ch))

    # solves ---------------------------------------------------------------
    def solve_A(self, rhs, r2, r3, om3_surface):
        """Vector potential for given interior source and boundary data.

        Returns ``(A, dA_h_top)`` where ``dA_h_top`` is the prescribed
        Neumann data of the horizontal components at ``w = 0``.
        """
        g = self.hgrid
        rhs_h = g.fft(rhs)
        r2h = g.fft(r2)
        m = sp.inv_laplacian(g, om3_surface, project=True)
        mh = g.fft(m)
        r3h = g.fft(r3)
        # d_w A_h(0) = grad A_3(0) + grad inv_lap(om_3|0) + r3^perp
        gh = np.stack([
            1j * g.kx_odd * (r2h + mh) + r3h[1],
            1j * g.ky_odd * (r2h + mh) - r3h[0],
        ])
        Ah = np.empty((3,) + rhs_h.shape[1:], dtype=complex)
        for c in range(2):
            Ah[c] = self._volume("dn", rhs_h[c]) + self._bvec(self.b_dn, gh[c])
        Ah[2] = self._volume("nd", rhs_h[2]) + self._bvec(self.b_nd_top, r2h)
        return g.ifft(Ah), g.ifft(gh)

    def solve_phi(self, r4, r5, Phi):
        """Harmonic potential and its surface normal derivative.

        Returns ``(phi, dphi_top)``.
        """
        g = self.hgrid
        r4h = g.fft(r4)
        r5h = g.fft(r5)
        Ph = g.fft(Phi)
        phih = (self._volume("nd", r4h) + self._bvec(self.b_nd_top, Ph)
                + self._bvec(self.b_nd_bot, r5h))
        f = self._modes(r4h)
        row = self._per_mode(self.row_nd)  # (m, Nw)
        trace = np.einsum("mj,jm->m", row, f)
        trace = (self._unmodes(trace) + self._mult(self.dn_mult, Ph)
                 + self._mult(self.sech, r5h))
        return g.ifft(phih), g.ifft(trace)


@lru_cache(maxsize=8)
def green_operator(hgrid, vgrid):
    """Cached :class:`GreenOperator` for a pair of grids."""
    return GreenOperator(hgrid, vgrid)


def green_solve_A(rhs, r2, r3, om3_surface, hgrid, vgrid):
    return green_operator(hgrid, vgrid).solve_A(rhs, r2, r3, om3_surface)[0]


def green_solve_phi(r4, r5, Phi, hgrid, vgrid):
    return green_operator(hgrid, vgrid).solve_phi(r4, r5, Phi)[0]


def green_trace_ops(hgrid, vgrid):
    """Surface rows of the kernels, keyed by name, one row per unique ``|xi|``."""
    op = green_operator(hgrid, vgrid)
    return {
        "k": op.kvals,
        "value_dn": op.M_dn[:, -1, :],
        "value_nd": op.M_nd[:, -1, :],
        "dw_nd": op.row_nd,
        "dw_dirichlet": op.dn_mult,
        "dw_bottom": op.sech,
        "value_dirichlet": op.b_nd_top[:, -1],
    }
