"""Specification-centric and standard simulation metrics via scenario sampling."""

__version__ = "0.1.0"

from .geometry import (All, Ball, Box, Complement, Empty, GeometryError, HalfSpace, Norm,
                       SetExpr, Union, contains_with_margin, set_from_dict, signed_distance)
from .spec import (Environment, SpecError, TimeVaryingSet, Trajectory, margin_of_violation,
                   satisfies, sup_trajectory_distance)
from .dynamics import (DivergenceError, DynamicalModel, KinematicBicycle, LinearModel,
                       QuadrotorVertical, register_model, simulate)
from .control import (NULL_CONTROLLER, DareError, LeastRestrictiveScheme, LQRScheme,
                      UniformSequenceScheme, least_restrictive_scheme, lqr_scheme,
                      sample_feasible, solve_dare)
from .metrics import MetricKind, NormConfig, SampleEvaluation, evaluate_sample
from .reach import GridSpec, SafetyKernel, compute_kernel, export_kernel, kernel_membership
from .scenario import (Estimate, ScenarioConfig, estimate, estimate_safe_env_fraction,
                       sample_size, split_seed, validate_guarantee)

__all__ = ["__version__",
          "All", "Ball", "Box", "Complement", "Empty", "GeometryError", "HalfSpace", "Norm",
          "SetExpr", "Union", "contains_with_margin", "set_from_dict", "signed_distance",
          "Environment", "SpecError", "TimeVaryingSet", "Trajectory", "margin_of_violation",
          "satisfies", "sup_trajectory_distance", "DivergenceError", "DynamicalModel",
          "KinematicBicycle", "LinearModel", "QuadrotorVertical", "register_model", "simulate",
          "NULL_CONTROLLER", "DareError", "LeastRestrictiveScheme", "LQRScheme",
          "UniformSequenceScheme", "least_restrictive_scheme", "lqr_scheme", "sample_feasible",
          "solve_dare", "MetricKind", "NormConfig", "SampleEvaluation", "evaluate_sample",
          "GridSpec", "SafetyKernel", "compute_kernel", "export_kernel", "kernel_membership",
          "Estimate", "ScenarioConfig", "estimate", "estimate_safe_env_fraction",
          "sample_size", "split_seed", "validate_guarantee"]
