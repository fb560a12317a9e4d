"""Generalized Dirichlet-Neumann operator by fixed-point iteration.

The straightened elliptic systems for the vector potential ``A`` and
the harmonic potential ``phi`` are written as flat-strip problems whose
right-hand sides collect the geometry-dependent remainders.  Each Picard
step solves the flat problems exactly with :mod:`gdno.greens`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import BottomFluxNonzero, NonConvergence
from .geometry import flat_curl, flat_div, flat_grad, flat_laplacian
from .greens import green_operator


@dataclass
class SolverOpts:
    """Fixed-point controls."""

    tol_fp: float = 1e-10
    max_iter: int = 200
    damping: float = 1.0
    tol_div: float = 1e-8

    def __post_init__(self):
        if not (self.tol_fp > 0 and self.max_iter > 0 and self.tol_div > 0):
            raise ValueError("solver tolerances and iteration cap must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SurfaceState:
    """Surface elevation and velocity potential (mean-zero)."""

    eta: np.ndarray
    Phi: np.ndarray
    h0: float = None


@dataclass
class VorticityData:
    """Straightened vorticity on the flat strip, shape (3, Nw, Nx, Ny)."""

    omega: np.ndarray


@dataclass
class BVPSolution:
    A: np.ndarray
    phi: np.ndarray
    U: np.ndarray
    G_I: np.ndarray
    G_II: np.ndarray
    G: np.ndarray
    U_par: np.ndarray
    V: np.ndarray
    W: np.ndarray
    nu: np.ndarray
    info: dict = field(default_factory=dict)


def _rel(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)


def normal_trace(v_surface, d):
    """``v . N`` at the surface with ``N = (-eta_x, -eta_y, 1)``."""
    ex, ey = d.sx[-1], d.sy[-1]
    return v_surface[2] - d.P(v_surface[0] * ex + v_surface[1] * ey)


def _surface_curls(A, Aw, d):
    """Flattened and flat curl of ``A`` at ``w = 0``."""
    g = d.hgrid
    As, Aws = A[:, -1], Aw[:, -1]
    q0, ex, ey, sw0 = d.q[-1], d.sx[-1], d.sy[-1], d.sw[-1]
    dxA, dyA = sp.dx(g, As), sp.dy(g, As)
    flat = np.stack([dyA[2] - Aws[1], Aws[0] - dxA[2], dxA[1] - dyA[0]])
    cx = d.P(ex * q0 * Aws)  # correction of d_x
    cy = d.P(ey * q0 * Aws)
    cw = d.P(sw0 * q0 * Aws)
    corr = np.stack([-cy[2] + cw[1], -cw[0] + cx[2], -cx[1] + cy[0]])
    return flat + corr, flat


def residual_terms_A(d, A, omega):
    """Remainders ``(R11, r21, r31)`` of the flattened vector-potential system."""
    g = d.hgrid
    Aw = d.dw(A)
    R11 = d.lap_correction(A, Aw, d.dww(A))
    ex, ey = d.sx[-1], d.sy[-1]
    r21 = d.P(A[0, -1] * ex + A[1, -1] * ey)
    cS, cF = _surface_curls(A, Aw, d)
    om0 = omega[:, -1]
    tail = sp.inv_laplacian(g, d.P(om0[0] * ex + om0[1] * ey), project=True)
    r31 = (-cS[:2] + cF[:2] - np.stack([d.P(cS[2] * ex), d.P(cS[2] * ey)])
           + sp.grad_perp(g, tail))
    return R11, r21, r31


def residual_terms_phi(d, phi):
    """Remainders ``(r12, r22)`` of the flattened harmonic system."""
    phiw = d.dw(phi)
    r12 = d.lap_correction(phi, phiw, d.dww(phi))
    r22 = d.P(d.sw[0] * d.q[0] * phiw[0])
    return r12, r22


def _iterate(step, x0, opts, what):
    x = x0
    upd = np.inf
    for it in range(1, opts.max_iter + 1):
        x_new, aux = step(x)
        upd = _rel(x_new, x)
        x = x + opts.damping * (x_new - x)
        if upd < opts.tol_fp:
            return x, aux, it, upd
    raise NonConvergence(opts.max_iter, upd, what)


def solve_vector_potential(omega, d, opts=None, return_info=False):
    """Vector potential solving the straightened div-curl system.

    Returns ``A`` (and an info dict when ``return_info``).
    """
    opts = SolverOpts() if opts is None else opts
    om = omega.omega if isinstance(omega, VorticityData) else np.asarray(omega)
    op = green_operator(d.hgrid, d.vgrid)
    om3s = om[2, -1]
    shape = om.shape
    if not np.any(om):
        A = np.zeros(shape)
        info = {"iterations": 0, "last_update": 0.0}
        return (A, info) if return_info else A

    if d.is_flat:
        A, _ = op.solve_A(om, np.zeros(shape[-2:]), np.zeros((2,) + shape[-2:]), om3s)
        info = {"iterations": 1, "last_update": 0.0}
        return (A, info) if return_info else A

    def step(A):
        R11, r21, r31 = residual_terms_A(d, A, om)
        return op.solve_A(om + R11, r21, r31, om3s)

    A0, _ = op.solve_A(om, np.zeros(shape[-2:]), np.zeros((2,) + shape[-2:]), om3s)
    A, _, it, upd = _iterate(step, A0, opts, "vector potential")
    info = {"iterations": it + 1, "last_update": upd}
    return (A, info) if return_info else A


def solve_harmonic_potential(Phi, d, opts=None, return_info=False):
    """Harmonic potential with surface value ``Phi`` and no bottom flux.

    Returns ``phi`` or ``(phi, dphi_top, info)`` when ``return_info``;
    ``dphi_top`` is ``d_w phi`` at ``w = 0`` from the analytic trace rows.
    """
    opts = SolverOpts() if opts is None else opts
    Phi = np.asarray(Phi, dtype=float)
    op = green_operator(d.hgrid, d.vgrid)
    Nw = d.vgrid.Nw
    zero3 = np.zeros((Nw,) + Phi.shape)
    zero2 = np.zeros(Phi.shape)
    phi0, tr0 = op.solve_phi(zero3, zero2, Phi)
    if d.is_flat or not np.any(Phi):
        info = {"iterations": 1, "last_update": 0.0}
        return (phi0, tr0, info) if return_info else phi0

    def step(phi):
        r12, r22 = residual_terms_phi(d, phi)
        return op.solve_phi(r12, r22, Phi)

    phi, tr, it, upd = _iterate(step, phi0, opts, "harmonic potential")
    # trace consistent with the returned iterate
    r12, r22 = residual_terms_phi(d, phi)
    _, tr = op.solve_phi(r12, r22, Phi)
    info = {"iterations": it + 1, "last_update": upd}
    return (phi, tr, info) if return_info else phi


def reconstruct_velocity(A, phi, d):
    """``curl^Sigma A + grad^Sigma phi``."""
    return flat_curl(A, d) + flat_grad(phi, d)


def surface_terms(d, Phi, G, omega):
    """Tangential velocity, vertical and horizontal surface velocities."""
    g = d.hgrid
    ex, ey = d.sx[-1], d.sy[-1]
    nu = normal_trace(omega[:, -1], d) if omega is not None else np.zeros(Phi.shape)
    K = -sp.grad_perp(g, sp.inv_laplacian(g, nu, project=True))
    U_par = sp.grad(g, Phi) + K
    gn2 = 1.0 + ex**2 + ey**2
    W = d.P((G + d.P(ex * U_par[0] + ey * U_par[1])) / gn2)
    V = U_par - np.stack([d.P(W * ex), d.P(W * ey)])
    return U_par, V, W, nu, K


def g_I_from_trace(d, Phi, dphi_top):
    """``grad^Sigma phi . N`` at the surface from the normal-derivative trace."""
    g = d.hgrid
    ex, ey = d.sx[-1], d.sy[-1]
    gP = sp.grad(g, Phi)
    if d.is_flat:
        return dphi_top
    return d.P((1.0 + ex**2 + ey**2) * d.q[-1] * dphi_top) - d.P(ex * gP[0] + ey * gP[1])


def g_II_from_A(d, A):
    """``curl^Sigma A . N`` at the surface; only tangential derivatives enter."""
    g = d.hgrid
    As = A[:, -1]
    ex, ey = d.sx[-1], d.sy[-1]
    out = sp.dx(g, As[1]) - sp.dy(g, As[0])
    if d.is_flat:
        return out
    return out + d.P(ey * sp.dx(g, As[2]) - ex * sp.dy(g, As[2]))


def gdno(state, omega, d, opts=None, velocity=True):
    """Solve both systems and evaluate the generalized DN operator."""
    opts = SolverOpts() if opts is None else opts
    om = omega.omega if isinstance(omega, VorticityData) else omega
    Nw = d.vgrid.Nw
    if om is None:
        om = np.zeros((3, Nw) + state.eta.shape)
    phi, tr, info_phi = solve_harmonic_potential(state.Phi, d, opts, return_info=True)
    A, info_A = solve_vector_potential(om, d, opts, return_info=True)
    G_I = g_I_from_trace(d, state.Phi, tr)
    G_II = g_II_from_A(d, A)
    G = G_I + G_II
    U = reconstruct_velocity(A, phi, d) if velocity else None
    U_par, V, W, nu, _ = surface_terms(d, state.Phi, G, om)
    info = {"phi": info_phi, "A": info_A}
    return BVPSolution(A, phi, U, G_I, G_II, G, U_par, V, W, nu, info)


def g_II(eta_or_d, omega, opts=None):
    """Rotational part only, for a prepared Diffeo."""
    d = eta_or_d
    A = solve_vector_potential(omega, d, opts)
    return g_II_from_A(d, A)


def make_divfree_vorticity(V, d, tol=1e-10):
    """``curl^Sigma V``, checked for zero bottom flux."""
    om = flat_curl(np.asarray(V, dtype=float), d)
    b = om[2, 0]
    scale = max(np.max(np.abs(om)), 1.0)
    if abs(d.hgrid.mean(b)) > tol * scale:
        raise BottomFluxNonzero(f"bottom mean of omega_3 is {d.hgrid.mean(b):.3e}")
    return VorticityData(om)


def dsigma(d, deta):
    """Variation of ``sigma`` for an elevation increment ``deta``."""
    w = d.w[:, None, None]
    lin = 1.0 + w / d.h
    if d.kind == "regularizing":
        return lin * sp.smoothing_op(d.hgrid, deta, d.delta, d.w, d.profile)
    if d.kind == "strip":
        return np.broadcast_to(deta, (len(d.w),) + deta.shape).copy()
    return lin * deta


def zcs_rhs(state, omega, d, opts=None, g=9.81, sol=None):
    """Right-hand sides ``(eta_t, Phi_t, omega_t)`` of the straightened system.

    ``Phi_t`` is returned mean-free, matching the homogeneous convention
    for ``Phi``.  ``omega_t`` includes the moving-coordinate correction
    ``sigma_t d_w^Sigma omega``.
    """
    opts = SolverOpts() if opts is None else opts
    om = omega.omega if isinstance(omega, VorticityData) else omega
    if sol is None:
        sol = gdno(state, om, d, opts)
    hg = d.hgrid
    P = d.P
    eta = state.eta
    ex, ey = d.sx[-1], d.sy[-1]
    G, Up = sol.G, sol.U_par
    gn2 = 1.0 + ex**2 + ey**2
    eta_t = G
    num = G + P(ex * Up[0] + ey * Up[1])
    vort = sp.inv_laplacian(hg, P(sol.nu * sol.V), project=True)
    Phi_t = (-g * eta - 0.5 * P(Up[0] ** 2 + Up[1] ** 2) + P(num**2 / (2.0 * gn2))
             - sp.div_perp(hg, vort))
    Phi_t = Phi_t - hg.mean(Phi_t)
    if not np.any(om):
        om_t = np.zeros_like(om)
    else:
        U = sol.U
        st = dsigma(d, eta_t)
        omw = d.dw(om)
        grads = [[d.d_sigma(om[i], j, omw[i]) for j in range(3)] for i in range(3)]
        Uw = d.dw(U)
        gU = [[d.d_sigma(U[i], j, Uw[i]) for j in range(3)] for i in range(3)]
        om_t = np.stack([
            P(st * grads[i][2])
            - P(sum(U[j] * grads[i][j] for j in range(3)))
            + P(sum(om[j] * gU[i][j] for j in range(3)))
            for i in range(3)
        ])
    return eta_t, Phi_t, om_t


def surface_good_unknowns(state, sol, d, j):
    """Good unknowns ``(Phi_(j), phi_(j), A_(j))`` for a multi-index ``j``."""
    jx, jy = j
    if jx + jy < 1:
        raise ValueError("multi-index must have order >= 1")
    g = d.hgrid
    mult = (1j * g.kx) ** jx * (1j * g.ky) ** jy

    def der(u):
        return sp.apply_multiplier(g, u, mult)

    phiw_S = d.d_sigma(sol.phi, 2)
    Aw_S = np.stack([d.d_sigma(sol.A[i], 2) for i in range(3)])
    w_I = phiw_S[-1]
    ds = der(d.sigma)
    Phi_j = der(state.Phi) - d.P(w_I * der(state.eta))
    phi_j = der(sol.phi) - d.P(ds * phiw_S)
    A_j = der(sol.A) - d.P(ds * Aw_S)
    return Phi_j, phi_j, A_j


def divcurl_defects(U, omega, d):
    """Interior curl and divergence defects of a velocity field."""
    return flat_curl(U, d) - omega, flat_div(U, d)


def flat_laplacian_residual(A, omega, d):
    return -flat_laplacian(A, d) - omega
