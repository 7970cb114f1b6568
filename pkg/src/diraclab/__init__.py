"""Concentrating Dirac operators on model grids: algebra, assembly, solvers and experiments."""

from .clifford import CliffordModel, build_clifford, clifford_defect
from .domain import BaseSpinorProfile, GridDomain, make_domain
from .swalgebra import SWCaseData, case_data

__version__ = "0.1.0"

__all__ = ["BaseSpinorProfile", "CliffordModel", "GridDomain", "SWCaseData", "build_clifford",
           "case_data", "clifford_defect", "make_domain"]
