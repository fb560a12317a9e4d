"""Grids, Fourier-side calculus and norms on the periodic strip.

Surface fields are real arrays of shape ``(..., Nx, Ny)`` sampled on the
uniform torus grid; strip fields carry a leading vertical axis of length
``Nw`` (Chebyshev-Lobatto nodes on ``[-h, 0]``), and vector fields a
further leading component axis.  Fourier coefficients are computed on
demand and normalized so that ``exp(i x)`` has unit coefficient.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidMultiplier, NonZeroMean

TOL_MEAN = 1e-10


class HGrid:
    """Uniform grid on the torus ``[0, Lx) x [0, Ly)``.

    Args:
        Nx, Ny: number of modes per axis (even, at least 4).
        Lx, Ly: periods.
    """

    def __init__(self, Nx, Ny=None, Lx=2 * np.pi, Ly=None):
        Ny = Nx if Ny is None else Ny
        Ly = Lx if Ly is None else Ly
        for n in (Nx, Ny):
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"mode counts must be even integers >= 4, got {n}")
        if Lx <= 0 or Ly <= 0:
            raise ValueError("periods must be positive")
        self.Nx, self.Ny = int(Nx), int(Ny)
        self.Lx, self.Ly = float(Lx), float(Ly)
        self.x = np.arange(self.Nx) * self.Lx / self.Nx
        self.y = np.arange(self.Ny) * self.Ly / self.Ny
        self.X, self.Y = np.meshgrid(self.x, self.y, indexing="ij")
        nx = np.fft.fftfreq(self.Nx, 1.0 / self.Nx)
        ny = np.fft.rfftfreq(self.Ny, 1.0 / self.Ny)
        self.nx = nx[:, None]
        self.ny = ny[None, :]
        self.kx = 2 * np.pi / self.Lx * self.nx
        self.ky = 2 * np.pi / self.Ly * self.ny
        # odd derivatives drop the Nyquist mode so real fields stay real
        self.kx_odd = np.where(np.abs(self.nx) == self.Nx // 2, 0.0, self.kx)
        self.ky_odd = np.where(np.abs(self.ny) == self.Ny // 2, 0.0, self.ky)
        self.k2 = self.kx**2 + self.ky**2
        self.kabs = np.sqrt(self.k2)
        self.dealias_mask = (np.abs(self.nx) <= self.Nx // 3) & (np.abs(self.ny) <= self.Ny // 3)

    @property
    def shape(self):
        return (self.Nx, self.Ny)

    @property
    def key(self):
        return (self.Nx, self.Ny, self.Lx, self.Ly)

    def __eq__(self, other):
        return isinstance(other, HGrid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"HGrid(Nx={self.Nx}, Ny={self.Ny}, Lx={self.Lx:g}, Ly={self.Ly:g})"

    @cached_property
    def full_k(self):
        """Wavenumbers on the full (non-real) FFT layout, shape (2, Nx, Ny)."""
        kx = 2 * np.pi / self.Lx * np.fft.fftfreq(self.Nx, 1.0 / self.Nx)
        ky = 2 * np.pi / self.Ly * np.fft.fftfreq(self.Ny, 1.0 / self.Ny)
        return np.array(np.meshgrid(kx, ky, indexing="ij"))

    def fft(self, u):
        """Unit-normalized half-spectrum coefficients over the last two axes."""
        return np.fft.rfft2(u, axes=(-2, -1)) / (self.Nx * self.Ny)

    def ifft(self, uh):
        return np.fft.irfft2(uh * (self.Nx * self.Ny), s=self.shape, axes=(-2, -1))

    def coefficients(self, u):
        """Unit-normalized full-spectrum coefficients."""
        return np.fft.fft2(u, axes=(-2, -1)) / (self.Nx * self.Ny)

    def from_coefficients(self, c):
        return np.fft.ifft2(c * (self.Nx * self.Ny), axes=(-2, -1)).real

    def mean(self, u):
        return np.mean(u, axis=(-2, -1))

    def integrate(self, u):
        return np.mean(u, axis=(-2, -1)) * self.Lx * self.Ly


@dataclass(frozen=True)
class VGrid:
    """Chebyshev-Lobatto nodes on ``[-h, 0]`` with Clenshaw-Curtis weights.

    Nodes are ordered upwards: ``w[0] = -h`` and ``w[-1] = 0``.
    """

    Nw: int
    h: float = 1.0

    def __post_init__(self):
        if self.Nw < 3:
            raise ValueError("need at least 3 vertical nodes")
        if self.h <= 0:
            raise ValueError("depth must be positive")

    @cached_property
    def t(self):
        """Reference nodes on [-1, 1], ascending."""
        n = self.Nw - 1
        return -np.cos(np.pi * np.arange(n + 1) / n)

    @cached_property
    def w(self):
        return 0.5 * self.h * (self.t - 1.0)

    @cached_property
    def weights(self):
        return 0.5 * self.h * clenshaw_curtis(self.Nw)

    @cached_property
    def D(self):
        return cheb_diff(self.t) * (2.0 / self.h)

    @cached_property
    def D2(self):
        return self.D @ self.D

    def interp_matrix(self, points):
        """Barycentric interpolation from the nodes to ``points``."""
        return bary_matrix(self.w, points)

    def integrate(self, f, axis=0):
        return np.tensordot(self.weights, f, axes=([0], [axis]))


def clenshaw_curtis(n_pts):
    """Clenshaw-Curtis weights on [-1, 1] for ``n_pts`` Chebyshev-Lobatto nodes."""
    N = n_pts - 1
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    v = np.ones(N - 1)
    inner = slice(1, N)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[inner]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2 * v / N
    return w


def cheb_diff(t):
    """Differentiation matrix on Chebyshev-Lobatto nodes ``t`` (any order)."""
    n = len(t)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    T = np.tile(t, (n, 1)).T
    dT = T - T.T
    D = np.outer(c, 1.0 / c) / (dT + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return D


def bary_matrix(nodes, points):
    """Barycentric interpolation matrix for Chebyshev-Lobatto ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    points = np.atleast_1d(np.asarray(points, dtype=float))
    n = len(nodes)
    lam = (-1.0) ** np.arange(n)
    lam[0] *= 0.5
    lam[-1] *= 0.5
    diff = points[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-14 * (1 + np.abs(nodes).max()))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = lam / diff
        M = q / q.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    M[rows] = exact[rows].astype(float)
    return M


class BumpProfile:
    """Smooth even cutoff equal to 1 on ``|t| <= t0`` and 0 on ``|t| >= t1``."""

    def __init__(self, t0=0.25, t1=1.0):
        if not 0 <= t0 < t1:
            raise ValueError("need 0 <= t0 < t1")
        self.t0, self.t1 = float(t0), float(t1)

    def __repr__(self):
        return f"BumpProfile(t0={self.t0:g}, t1={self.t1:g})"

    @staticmethod
    def _psi(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    def _step(self, u, order=0):
        """Smooth step S rising from 0 at u<=0 to 1 at u>=1, and derivatives."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        A = self._psi(u)
        B = self._psi(1 - u)
        if order == 0:
            return A / (A + B)
        with np.errstate(divide="ignore", invalid="ignore"):
            iu = np.where(u > 0, 1.0 / np.where(u > 0, u, 1), 0.0)
            iv = np.where(u < 1, 1.0 / np.where(u < 1, 1 - u, 1), 0.0)
        A1 = A * iu**2
        B1 = -B * iv**2
        S = A + B
        N = A1 * B - A * B1
        if order == 1:
            return N / S**2
        A2 = A * (iu**4 - 2 * iu**3)
        B2 = B * (iv**4 - 2 * iv**3)
        N1 = A2 * B - A * B2
        S1 = A1 + B1
        return (N1 * S**2 - N * 2 * S * S1) / S**4

    def __call__(self, t):
        u = (np.abs(t) - self.t0) / (self.t1 - self.t0)
        return 1.0 - self._step(u)

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        u = (np.abs(t) - self.t0) / (self.t1 - self.t0)
        return -np.sign(t) * self._step(u, 1) / (self.t1 - self.t0)

    def d2(self, t):
        u = (np.abs(t) - self.t0) / (self.t1 - self.t0)
        return -self._step(u, 2) / (self.t1 - self.t0) ** 2

    def sup_d1(self, n=20001):
        t = np.linspace(self.t0, self.t1, n)
        return float(np.max(np.abs(self.d1(t))))


@dataclass
class Field:
    """Named container pairing sampled values with their grids."""

    values: np.ndarray
    hgrid: HGrid
    vgrid: VGrid = None
    name: str = ""

    @property
    def coefficients(self):
        return self.hgrid.coefficients(self.values)


def dealias(grid, u):
    """2/3-rule truncation over the horizontal modes."""
    return grid.ifft(grid.fft(u) * grid.dealias_mask)


def apply_multiplier(grid, u, m):
    """Multiply the Fourier coefficients of ``u`` by ``m``.

    ``m`` is either an array on the half-spectrum layout or a callable
    ``m(kx, ky)`` evaluated there.
    """
    vals = m(grid.kx, grid.ky) if callable(m) else np.asarray(m)
    vals = np.broadcast_to(vals, grid.kabs.shape) if np.ndim(vals) < 2 else vals
    if not np.all(np.isfinite(vals)):
        raise InvalidMultiplier("multiplier is not finite on every grid mode")
    return grid.ifft(grid.fft(u) * vals)


def dx(grid, u):
    return grid.ifft(1j * grid.kx_odd * grid.fft(u))


def dy(grid, u):
    return grid.ifft(1j * grid.ky_odd * grid.fft(u))


def grad(grid, u):
    uh = grid.fft(u)
    return np.stack([grid.ifft(1j * grid.kx_odd * uh), grid.ifft(1j * grid.ky_odd * uh)])


def grad_perp(grid, u):
    """``(d_y u, -d_x u)``."""
    uh = grid.fft(u)
    return np.stack([grid.ifft(1j * grid.ky_odd * uh), grid.ifft(-1j * grid.kx_odd * uh)])


def div(grid, F):
    Fh = grid.fft(F)
    return grid.ifft(1j * grid.kx_odd * Fh[0] + 1j * grid.ky_odd * Fh[1])


def div_perp(grid, F):
    """``d_y F1 - d_x F2``, the adjoint pairing of ``grad_perp``."""
    Fh = grid.fft(F)
    return grid.ifft(1j * grid.ky_odd * Fh[0] - 1j * grid.kx_odd * Fh[1])


def laplacian(grid, u):
    return grid.ifft(-grid.k2 * grid.fft(u))


def perp(F):
    """``(F2, -F1)``."""
    return np.stack([F[1], -F[0]])


def _has_mean(grid, u, tol):
    m = np.abs(grid.mean(u))
    scale = np.sqrt(np.mean(np.asarray(u) ** 2, axis=(-2, -1)))
    return np.any(m > tol * np.maximum(scale, np.finfo(float).tiny))


def inv_laplacian(grid, u, tol_mean=TOL_MEAN, project=False):
    """Mean-zero solution of ``Delta v = u``.

    Raises NonZeroMean when the mean of ``u`` exceeds ``tol_mean``
    relative to its RMS, unless ``project`` is set, in which case the mean
    is discarded.
    """
    if not project and _has_mean(grid, u, tol_mean):
        raise NonZeroMean("inverse Laplacian needs a mean-zero input")
    k2 = grid.k2.copy()
    k2[0, 0] = 1.0
    mult = -1.0 / k2
    mult[0, 0] = 0.0
    return grid.ifft(grid.fft(u) * mult)


def hodge_decompose(grid, F):
    """Split a planar field as ``grad Phi + grad_perp Psi + mean``."""
    F = np.asarray(F, dtype=float)
    mean = grid.mean(F)
    Phi = inv_laplacian(grid, div(grid, F), project=True)
    Psi = inv_laplacian(grid, div_perp(grid, F), project=True)
    return Phi, Psi, mean


def smoothing_op(grid, eta, delta, w, profile):
    """``profile(delta * w * |D|) eta`` for a scalar or array of depths ``w``."""
    w = np.asarray(w, dtype=float)
    eh = grid.fft(eta)
    mult = profile(delta * w[..., None, None] * grid.kabs)
    return grid.ifft(mult * eh)


def sobolev_norm(grid, u, s=0.0, vgrid=None, ncomp=None):
    """Discrete ``H^s`` norm with unit-normalized modes.

    For strip fields pass ``vgrid``; the vertical axis is the one just
    before the horizontal pair and is integrated with the quadrature
    weights.  Leading axes beyond that are summed (vector components).
    """
    c = grid.coefficients(np.asarray(u, dtype=float))
    kx, ky = grid.full_k
    dens = (1.0 + kx**2 + ky**2) ** s * np.abs(c) ** 2
    dens = dens.sum(axis=(-2, -1))
    if vgrid is not None:
        dens = np.tensordot(dens, vgrid.weights, axes=([-1], [0]))
    return float(np.sqrt(np.sum(dens)))


def l2_norm(grid, u, vgrid=None):
    return sobolev_norm(grid, u, 0.0, vgrid)
