"""Nonconforming immersed finite elements (CR and rotated Q1) with integral-value DOFs."""
from .basis import CR, RQ1, ShapeSet, standard_shapes
from .geometry import (
    CURVE,
    CURVE_MIDPOINT,
    LINE,
    LINE_MIDPOINT,
    MINUS,
    PLUS,
    RECTANGULAR,
    TRIANGULAR,
    Circle,
    HypothesisViolation,
    Line,
    build_mesh,
    classify_elements,
    compute_cut,
)
from .ife import check_identities, ife_coefficients, ife_shape_functions
from .study import StudyConfig, circle_benchmark, error_norms, interpolate, run_study, write_csv
from .system import IFESpace, NoConvergence, assemble, solve

__all__ = [
    "CR", "RQ1", "ShapeSet", "standard_shapes",
    "CURVE", "CURVE_MIDPOINT", "LINE", "LINE_MIDPOINT", "MINUS", "PLUS", "RECTANGULAR", "TRIANGULAR",
    "Circle", "HypothesisViolation", "Line", "build_mesh", "classify_elements", "compute_cut",
    "check_identities", "ife_coefficients", "ife_shape_functions",
    "StudyConfig", "circle_benchmark", "error_norms", "interpolate", "run_study", "write_csv",
    "IFESpace", "NoConvergence", "assemble", "solve",
]
