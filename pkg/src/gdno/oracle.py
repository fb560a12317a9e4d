"""Independent checks: a finite-difference route for both elliptic systems,
div-curl residual audits and log-log slope fits.

The finite-difference solver discretizes the flattened Laplacian in
coefficient form with second-order centered stencils on a uniform
``(Nw, Nx, Ny)`` lattice.  Boundary rows use second-order one-sided
differences.  The linear systems are solved with GMRES preconditioned by
the flat (``eta = 0``) operator, which decouples into one banded system
per horizontal Fourier mode of the discrete stencil.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import spectral as sp
from .errors import DegenerateFit, SolveFailed
from .geometry import make_regularizing_diffeo, make_strip_map, make_trivial_diffeo


@dataclass(frozen=True)
class FDGrid:
    """Uniform lattice on ``T^2 x [-h, 0]`` with ``Nw`` levels including both ends."""

    Nx: int
    Ny: int
    Nw: int
    h: float = 1.0
    Lx: float = 2 * np.pi
    Ly: float = 2 * np.pi

    def __post_init__(self):
        if self.Nw < 9:
            raise ValueError("FD lattice needs Nw >= 9")
        if self.h <= 0 or self.Lx <= 0 or self.Ly <= 0:
            raise ValueError("spacing must be positive")

    @cached_property
    def hgrid(self):
        return sp.HGrid(self.Nx, self.Ny, self.Lx, self.Ly)

    @property
    def w(self):
        return np.linspace(-self.h, 0.0, self.Nw)

    @property
    def dw(self):
        return self.h / (self.Nw - 1)

    @property
    def dx(self):
        return self.Lx / self.Nx

    @property
    def dy(self):
        return self.Ly / self.Ny

    @property
    def shape(self):
        return (self.Nw, self.Nx, self.Ny)

    @property
    def size(self):
        return self.Nw * self.Nx * self.Ny

    def index(self, k, i, j):
        return (k * self.Nx + i) * self.Ny + j

    # 1-D stencils --------------------------------------------------------
    def _periodic(self, n, step, second):
        e = np.ones(n)
        if second:
            M = sps.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
            M[0, n - 1] = M[n - 1, 0] = 1.0
            return (M / step**2).tocsr()
        M = sps.diags([-e[:-1], e[:-1]], [-1, 1], format="lil")
        M[0, n - 1], M[n - 1, 0] = -1.0, 1.0
        return (M / (2 * step)).tocsr()

    def _vertical(self, second):
        n, s = self.Nw, self.dw
        M = sps.lil_matrix((n, n))
        for k in range(1, n - 1):
            if second:
                M[k, k - 1], M[k, k], M[k, k + 1] = 1 / s**2, -2 / s**2, 1 / s**2
            else:
                M[k, k - 1], M[k, k + 1] = -0.5 / s, 0.5 / s
        if not second:
            M[0, 0], M[0, 1], M[0, 2] = -1.5 / s, 2 / s, -0.5 / s
            M[n - 1, n - 1], M[n - 1, n - 2], M[n - 1, n - 3] = 1.5 / s, -2 / s, 0.5 / s
        return M.tocsr()

    @cached_property
    def ops(self):
        """3-D difference matrices on the flattened (k, i, j) index."""
        Iw, Ix, Iy = (sps.identity(n, format="csr") for n in self.shape)
        Dx = self._periodic(self.Nx, self.dx, False)
        Dy = self._periodic(self.Ny, self.dy, False)
        Dxx = self._periodic(self.Nx, self.dx, True)
        Dyy = self._periodic(self.Ny, self.dy, True)
        Dw, Dww = self._vertical(False), self._vertical(True)
        Ixy = sps.kron(Ix, Iy, format="csr")
        return {
            "x": sps.kron(Iw, sps.kron(Dx, Iy), format="csr"),
            "y": sps.kron(Iw, sps.kron(Ix, Dy), format="csr"),
            "xx": sps.kron(Iw, sps.kron(Dxx, Iy), format="csr"),
            "yy": sps.kron(Iw, sps.kron(Ix, Dyy), format="csr"),
            "w": sps.kron(Dw, Ixy, format="csr"),
            "ww": sps.kron(Dww, Ixy, format="csr"),
        }

    def level_mask(self, k):
        m = np.zeros(self.shape, dtype=bool)
        m[k] = True
        return m.ravel()

    @cached_property
    def fd_k2(self):
        """Symbol of the 5-point horizontal Laplacian (sign flipped), full FFT layout."""
        kx, ky = self.hgrid.full_k
        return ((2 - 2 * np.cos(kx * self.dx)) / self.dx**2
                + (2 - 2 * np.cos(ky * self.dy)) / self.dy**2)


def _resample(u, grid_from, grid_to):
    """Fourier interpolation between horizontal grids (surface fields)."""
    if grid_from == grid_to:
        return np.asarray(u, dtype=float)
    c = grid_from.coefficients(u)
    out = np.zeros(np.shape(u)[:-2] + grid_to.shape, dtype=complex)
    nx = min(grid_from.Nx, grid_to.Nx) // 2
    ny = min(grid_from.Ny, grid_to.Ny) // 2
    for sx in (slice(0, nx), slice(-nx + 1, None) if nx > 1 else slice(0, 0)):
        for sy in (slice(0, ny), slice(-ny + 1, None) if ny > 1 else slice(0, 0)):
            out[..., sx, sy] = c[..., sx, sy]
    return grid_to.from_coefficients(out)


def fd_diffeo(d, fg):
    """Rebuild a straightening map of the same kind on the FD lattice."""
    eta = _resample(d.eta, d.hgrid, fg.hgrid)
    vg = sp.VGrid(9, fg.h)
    if d.kind == "trivial":
        return make_trivial_diffeo(eta, fg.h, fg.hgrid, vg, wnodes=fg.w, dealias=False)
    if d.kind == "regularizing":
        return make_regularizing_diffeo(eta, fg.h, d.delta, d.profile, fg.hgrid, vg,
                                        h0=d.h0, wnodes=fg.w, dealias=False)
    return make_strip_map(eta, fg.h, d.delta, fg.hgrid, vg, wnodes=fg.w, dealias=False)


def _diag(v):
    return sps.diags(np.ravel(v))


def _laplacian_matrix(dd, fg):
    """Sparse ``-Delta^Sigma`` in coefficient form."""
    C = dd.coeffs()
    o = fg.ops
    L = (_diag(C.a) @ o["ww"] + o["xx"] + o["yy"]
         + _diag(C.b[0]) @ o["x"] @ o["w"] + _diag(C.b[1]) @ o["y"] @ o["w"]
         - _diag(C.c) @ o["w"])
    return (-L).tocsr()


def _rows(M, mask):
    return (_diag(mask.astype(float)) @ M).tocsr()


def _d_sigma(dd, fg, j):
    """Sparse ``d_j^Sigma`` (x, y, w) with one-sided vertical ends."""
    o = fg.ops
    qw = _diag(dd.q) @ o["w"]
    if j == 2:
        return qw.tocsr()
    s = dd.sx if j == 0 else dd.sy
    return (o["x" if j == 0 else "y"] - _diag(s) @ qw).tocsr()


class _FlatPreconditioner:
    """Exact inverse of the flat FD operator, one banded solve per mode.

    ``top`` / ``bottom`` select the boundary rows: ``"D"`` Dirichlet,
    ``"N"`` one-sided Neumann (with sign ``top_sign`` at the surface).
    """

    def __init__(self, fg, bottom, top, top_sign=1.0):
        self.fg = fg
        n, s = fg.Nw, fg.dw
        Mw = sps.lil_matrix((n, n))
        for k in range(1, n - 1):
            Mw[k, k - 1], Mw[k, k], Mw[k, k + 1] = -1 / s**2, 2 / s**2, -1 / s**2
        if bottom == "D":
            Mw[0, 0] = 1.0
        else:
            Mw[0, 0], Mw[0, 1], Mw[0, 2] = -1.5 / s, 2 / s, -0.5 / s
        if top == "D":
            Mw[n - 1, n - 1] = 1.0
        else:
            Mw[n - 1, n - 1], Mw[n - 1, n - 2], Mw[n - 1, n - 3] = (
                top_sign * 1.5 / s, -top_sign * 2 / s, top_sign * 0.5 / s)
        interior = np.ones(n)
        interior[[0, n - 1]] = 0.0
        nm = fg.Nx * fg.Ny
        P = (sps.kron(sps.identity(nm), Mw.tocsr())
             + sps.kron(sps.diags(fg.fd_k2.ravel()), sps.diags(interior)))
        self.lu = spla.splu(P.tocsc(), permc_spec="NATURAL")

    def __call__(self, r):
        fg = self.fg
        R = np.fft.fft2(r.reshape(fg.shape), axes=(1, 2))
        z = R.transpose(1, 2, 0).reshape(-1)
        sol = self.lu.solve(np.ascontiguousarray(z.real)) + 1j * self.lu.solve(
            np.ascontiguousarray(z.imag))
        out = sol.reshape(fg.Nx, fg.Ny, fg.Nw).transpose(2, 0, 1)
        return np.fft.ifft2(out, axes=(1, 2)).real.ravel()


def _gmres(M, b, prec, tol, maxiter):
    n = M.shape[0]
    Pop = spla.LinearOperator((n, n), matvec=prec)
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros(n)
    x, _ = spla.gmres(M, b, M=Pop, rtol=tol, atol=0.0, restart=60, maxiter=maxiter)
    res = np.linalg.norm(M @ x - b) / nb
    if not res <= max(10 * tol, 1e-12):
        raise SolveFailed(res)
    return x


def fd_solve_phi(Phi, d, fg, tol=1e-10, maxiter=50, return_matrix=False):
    """Harmonic potential on the FD lattice; ``Phi`` lives on ``d.hgrid``."""
    dd = fd_diffeo(d, fg)
    Phi_fd = _resample(Phi, d.hgrid, fg.hgrid)
    top, bot = fg.level_mask(fg.Nw - 1), fg.level_mask(0)
    interior = ~(top | bot)
    L = _laplacian_matrix(dd, fg)
    M = _rows(L, interior) + _rows(sps.identity(fg.size), top) + _rows(fg.ops["w"], bot)
    b = np.zeros(fg.shape)
    b[-1] = Phi_fd
    prec = _FlatPreconditioner(fg, "N", "D")
    x = _gmres(M.tocsr(), b.ravel(), prec, tol, maxiter)
    phi = x.reshape(fg.shape)
    return (phi, M) if return_matrix else phi


def _tangential_target(omega, dd, fg):
    g = fg.hgrid
    s = omega[:, -1]
    nu = s[2] - dd.sx[-1] * s[0] - dd.sy[-1] * s[1]
    return -sp.grad_perp(g, sp.inv_laplacian(g, nu, project=True))


def fd_curl_rows(dd, fg):
    """Sparse blocks ``C[i][j]`` with ``(curl^Sigma A)_i = sum_j C[i][j] A_j``."""
    D = [_d_sigma(dd, fg, j) for j in range(3)]
    Z = sps.csr_matrix((fg.size, fg.size))
    return [[Z, -D[2], D[1]], [D[2], Z, -D[0]], [-D[1], D[0], Z]]


def fd_solve_A(omega, d, fg, tol=1e-10, maxiter=50, omega_on_fd=True):
    """Vector potential on the FD lattice.

    ``omega`` holds nodal values on the FD lattice (shape (3, Nw, Nx, Ny))
    unless ``omega_on_fd`` is False, in which case it is a callable
    ``omega(w) -> (3, len(w), Nx, Ny)`` evaluated at the FD levels.
    """
    dd = fd_diffeo(d, fg)
    om = np.asarray(omega(fg.w) if callable(omega) else omega, dtype=float)
    if not np.any(om):
        return np.zeros((3,) + fg.shape)
    n = fg.size
    top, bot = fg.level_mask(fg.Nw - 1), fg.level_mask(0)
    interior = ~(top | bot)
    L = _laplacian_matrix(dd, fg)
    I = sps.identity(n, format="csr")
    Z = sps.csr_matrix((n, n))
    C = fd_curl_rows(dd, fg)
    ex, ey = np.ravel(np.broadcast_to(dd.sx[-1], fg.shape)), np.ravel(np.broadcast_to(dd.sy[-1], fg.shape))
    Ex, Ey = sps.diags(ex), sps.diags(ey)
    # tangential rows: (curl A)_h + (curl A)_3 grad eta
    T1 = [C[0][j] + Ex @ C[2][j] for j in range(3)]
    T2 = [C[1][j] + Ey @ C[2][j] for j in range(3)]
    Lint = _rows(L, interior)
    blocks = [
        [Lint + _rows(I, bot) + _rows(T2[0], top), _rows(T2[1], top), _rows(T2[2], top)],
        [_rows(T1[0], top), Lint + _rows(I, bot) + _rows(T1[1], top), _rows(T1[2], top)],
        [_rows(-Ex, top), _rows(-Ey, top), Lint + _rows(fg.ops["w"], bot) + _rows(I, top)],
    ]
    M = sps.bmat(blocks, format="csr")
    K = _tangential_target(om, dd, fg)
    b = om.copy()
    b[:, 0] = 0.0
    b[0, -1] = K[1]
    b[1, -1] = K[0]
    b[2, -1] = 0.0
    pre = [_FlatPreconditioner(fg, "D", "N", 1.0), _FlatPreconditioner(fg, "D", "N", -1.0),
           _FlatPreconditioner(fg, "N", "D")]

    def prec(r):
        r = r.reshape(3, n)
        return np.concatenate([pre[c](r[c]) for c in range(3)])

    x = _gmres(M, b.ravel(), prec, tol, maxiter)
    return x.reshape((3,) + fg.shape)


def fd_surface_traces(phi=None, A=None, Phi=None, d=None, fg=None):
    """Surface data of FD solutions: ``G_I`` from ``phi`` and ``(A|_0, G_II)`` from ``A``."""
    dd = fd_diffeo(d, fg)
    out = {}
    ex, ey = dd.sx[-1], dd.sy[-1]
    if phi is not None:
        g = fg.hgrid
        Phi_fd = _resample(Phi, d.hgrid, g)
        pw = (fg.ops["w"] @ phi.ravel()).reshape(fg.shape)[-1]
        gP = sp.grad(g, Phi_fd)
        out["G_I"] = (1 + ex**2 + ey**2) * dd.q[-1] * pw - ex * gP[0] - ey * gP[1]
        out["dphi_top"] = pw
    if A is not None:
        C = fd_curl_rows(dd, fg)
        curl = [sum(C[i][j] @ A[j].ravel() for j in range(3)).reshape(fg.shape)[-1]
                for i in range(3)]
        out["A_top"] = A[:, -1]
        out["G_II"] = curl[2] - ex * curl[0] - ey * curl[1]
    return out


# audits ------------------------------------------------------------------

def verify_divcurl(U, omega, Phi, d, tol=1e-6):
    """Residuals of the straightened div-curl system for a velocity ``U``.

    Returns a dict with relative ``curl``, ``div``, ``bottom`` and
    ``surface`` residuals (L2 norms) and a ``passed`` flag per entry.
    """
    from .geometry import flat_curl, flat_div

    g, v = d.hgrid, d.vgrid
    U = np.asarray(U, dtype=float)
    om = np.zeros_like(U) if omega is None else np.asarray(omega, dtype=float)

    def n3(f):
        return sp.l2_norm(g, f, v)

    def n2(f):
        return sp.l2_norm(g, f)

    tiny = np.finfo(float).tiny
    scale_U = max(n3(U), tiny)
    curl_def = n3(flat_curl(U, d) - om) / max(n3(om), scale_U)
    div_def = n3(flat_div(U, d)) / scale_U
    Us = U[:, -1]
    ex, ey = d.sx[-1], d.sy[-1]
    Upar = Us[:2] + Us[2] * np.stack([ex, ey])
    nu = om[2, -1] - ex * om[0, -1] - ey * om[1, -1]
    target = sp.grad(g, Phi) - sp.grad_perp(g, sp.inv_laplacian(g, nu, project=True))
    surf_scale = max(n2(Upar), n2(target), tiny)
    report = {
        "curl": float(curl_def),
        "div": float(div_def),
        "bottom": float(n2(U[2, 0]) / max(n2(U[2]), scale_U)),
        "surface": float(n2(Upar - target) / surf_scale),
    }
    report["passed"] = {k: bool(val <= tol) for k, val in list(report.items())}
    report["ok"] = all(report["passed"].values())
    return report


def slope_fit(samples):
    """Least-squares exponent ``p`` in ``error ~ C scale^p`` and its ``r^2``."""
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[0] < 3 or s.shape[1] != 2:
        raise DegenerateFit("need at least three (scale, error) pairs")
    x, y = s[:, 0], s[:, 1]
    if not (np.all(np.isfinite(s)) and np.all(x > 0) and np.all(y > 0)):
        raise DegenerateFit("scales and errors must be finite and positive")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise DegenerateFit("scales must not all coincide")
    p, c = np.polyfit(lx, ly, 1)
    resid = ly - (p * lx + c)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum(resid**2) / ss_tot
    return float(p), float(r2)
