"""Bi-factor and second-order factor copula models for ordinal item responses."""

__version__ = "0.1.0"

from .copulas import CopulaSpec, get_family, theoretical_semicorrelations
from .data import OrdinalDataset, ingest_csv
from .estimate import FitResult, estimate_cutpoints, fit, standard_errors
from .gof import M2Result, delta2, discrepancies, m2, pi2_and_p2, xi2
from .model import GroupStructure, ModelSpec, build_spec, loglik, margin, pmf
from .quadrature import QuadratureRule, gauss_legendre
from .select import SelectionTrace, select_families, vuong_interval
from .simulate import SimDesign, draw, table1_design

__all__ = [
    "CopulaSpec", "get_family", "theoretical_semicorrelations", "OrdinalDataset", "ingest_csv",
    "FitResult", "estimate_cutpoints", "fit", "standard_errors", "M2Result", "delta2", "discrepancies",
    "m2", "pi2_and_p2", "xi2", "GroupStructure", "ModelSpec", "build_spec", "loglik", "margin", "pmf",
    "QuadratureRule", "gauss_legendre", "SelectionTrace", "select_families", "vuong_interval",
    "SimDesign", "draw", "table1_design",
]
