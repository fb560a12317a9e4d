"""Generalized Dirichlet-Neumann operator for water waves with vorticity."""

from .spectral import HGrid, VGrid, BumpProfile, Field
from .geometry import make_trivial_diffeo, make_regularizing_diffeo, make_strip_map
from .solver import SolverOpts, SurfaceState, VorticityData, gdno
from .expansion import gj_I, gj_II, dG_II, taylor_gdno
from .paralin import Cutoff, Symbol, paradiff_apply, factorization_symbols
from .oracle import FDGrid, verify_divcurl, slope_fit
from .estimator import GeneralizedDNO

__version__ = "0.1.0"

__all__ = [
    "HGrid", "VGrid", "BumpProfile", "Field",
    "make_trivial_diffeo", "make_regularizing_diffeo", "make_strip_map",
    "SolverOpts", "SurfaceState", "VorticityData", "gdno",
    "gj_I", "gj_II", "dG_II", "taylor_gdno",
    "Cutoff", "Symbol", "paradiff_apply", "factorization_symbols",
    "FDGrid", "verify_divcurl", "slope_fit",
    "GeneralizedDNO",
]
