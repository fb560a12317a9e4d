"""scikit-learn style wrapper around the DN operator routes."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import spectral as sp
from .geometry import make_regularizing_diffeo, make_trivial_diffeo
from .solver import SolverOpts, SurfaceState, gdno
from .expansion import taylor_gdno


class GeneralizedDNO(BaseEstimator, TransformerMixin):
    """Generalized Dirichlet-Neumann operator for a fixed surface.

    ``fit(eta)`` fixes the surface and prepares the straightening map;
    ``transform(Phi)`` returns ``G[eta](Phi, omega)`` for one field of shape
    ``(Nx, Ny)`` or a batch ``(n, Nx, Ny)``.

    Parameters
    ----------
    h : depth.
    Nw : vertical Chebyshev nodes.
    route : ``"solver"`` (fixed point) or ``"expansion"`` (Taylor, order ``J``).
    J : expansion order.
    diffeo : ``"trivial"`` or ``"regularizing"``.
    delta : regularizing parameter.
    omega : straightened vorticity ``(3, Nw, Nx, Ny)`` or None.
    tol, max_iter, damping : fixed-point controls.
    """

    def __init__(self, h=1.0, Nw=24, route="solver", J=3, diffeo="trivial", delta=0.1,
                 omega=None, Lx=2 * np.pi, Ly=2 * np.pi, tol=1e-10, max_iter=200,
                 damping=1.0):
        self.h = h
        self.Nw = Nw
        self.route = route
        self.J = J
        self.diffeo = diffeo
        self.delta = delta
        self.omega = omega
        self.Lx = Lx
        self.Ly = Ly
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping

    def fit(self, X, y=None):
        eta = np.asarray(X, dtype=float)
        if eta.ndim != 2:
            raise ValueError("fit expects a single elevation field of shape (Nx, Ny)")
        if self.route not in ("solver", "expansion"):
            raise ValueError(f"unknown route {self.route!r}")
        self.hgrid_ = sp.HGrid(eta.shape[0], eta.shape[1], self.Lx, self.Ly)
        self.vgrid_ = sp.VGrid(self.Nw, self.h)
        if self.diffeo == "trivial":
            self.diffeo_ = make_trivial_diffeo(eta, self.h, self.hgrid_, self.vgrid_)
        elif self.diffeo == "regularizing":
            self.diffeo_ = make_regularizing_diffeo(
                eta, self.h, self.delta, sp.BumpProfile(), self.hgrid_, self.vgrid_)
        else:
            raise ValueError(f"unknown diffeo {self.diffeo!r}")
        self.eta_ = eta
        self.opts_ = SolverOpts(tol_fp=self.tol, max_iter=self.max_iter, damping=self.damping)
        self.n_iter_ = None
        return self

    def _check(self):
        if not hasattr(self, "diffeo_"):
            raise NotFittedError("call fit(eta) first")

    def _one(self, Phi):
        state = SurfaceState(self.eta_, Phi)
        if self.route == "expansion":
            return taylor_gdno(state, self.omega, self.diffeo_, self.J)
        sol = gdno(state, self.omega, self.diffeo_, self.opts_, velocity=False)
        self.n_iter_ = (sol.info["phi"]["iterations"], sol.info["A"]["iterations"])
        return sol.G

    def transform(self, X):
        self._check()
        Phi = np.asarray(X, dtype=float)
        if Phi.shape[-2:] != self.eta_.shape:
            raise ValueError(f"expected trailing shape {self.eta_.shape}, got {Phi.shape}")
        if Phi.ndim == 2:
            return self._one(Phi)
        return np.stack([self._one(p) for p in Phi.reshape((-1,) + Phi.shape[-2:])]
                        ).reshape(Phi.shape)

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Negative relative L2 error of ``transform(X)`` against ``y``."""
        G = self.transform(X)
        y = np.asarray(y, dtype=float)
        return -float(np.linalg.norm(G - y) / max(np.linalg.norm(y), 1e-300))
