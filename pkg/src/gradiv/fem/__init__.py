"""Finite element spaces, quadrature and assembly."""

from .assembly import (Assembler, Operators, Pattern, assemble_convection, assemble_divergence,
                       assemble_graddiv, assemble_graddiv_lagged, assemble_mass, assemble_operators,
                       assemble_stiffness)
from .functions import (ErrorNorms, Evaluator, PointOutsideMeshError, discrete_time_norms, error_norms,
                        evaluate_at_point, interpolate, interpolate_pressure, interpolate_velocity,
                        quadrature_norms)
from .quadrature import QuadratureRule, assembly_rule, collapsed_gauss, error_rule, radon7
from .space import MINI, TAYLOR_HOOD, MixedSpace, build_space, element_family

__all__ = [
    "Assembler", "Operators", "Pattern", "assemble_convection", "assemble_divergence", "assemble_graddiv",
    "assemble_graddiv_lagged", "assemble_mass", "assemble_operators", "assemble_stiffness",
    "ErrorNorms", "Evaluator", "PointOutsideMeshError", "discrete_time_norms", "error_norms",
    "evaluate_at_point", "interpolate", "interpolate_pressure", "interpolate_velocity", "quadrature_norms",
    "QuadratureRule", "assembly_rule", "collapsed_gauss", "error_rule", "radon7",
    "MINI", "TAYLOR_HOOD", "MixedSpace", "build_space", "element_family",
]
