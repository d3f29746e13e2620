"""Intrinsic ultracontractivity toolkit for killed jump processes."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (ConfigError, ConvergenceError, DiscretizationError, DomainError, IUKitError, NumericError,
                     QuadratureError)
from .kernels import CoefficientField, JumpKernel, ScalingFunction, TemperingFunction, phi_inverse
from .geometry import (Ball, BallComplement, Box, GrowthFunction, HalfSpace, Horn, ReferenceFunction, Ring,
                       WholeSpace, boundary_distance, killing_potential, region_contains)
from .spectral import (assemble_generator, build_grid, extrapolated_mean_exit_time, ground_state, heat_kernel,
                       iu_ratio)
from .montecarlo import SimScheme, exit_probe, levy_system_check, mean_exit_time, simulate_exits, \
    survival_probability
from .criteria import (ProblemSetup, RateFunction, beta_rate, classify, compactness_verdict,
                       ground_state_envelope, iu_integral_test, lower_bound_chain, lower_bound_direct,
                       necessary_condition_check)

__all__ = [
    "BACKEND", "ConfigError", "ConvergenceError", "DiscretizationError", "DomainError", "IUKitError",
    "NumericError", "QuadratureError", "CoefficientField", "JumpKernel", "ScalingFunction", "TemperingFunction",
    "phi_inverse", "Ball", "BallComplement", "Box", "GrowthFunction", "HalfSpace", "Horn", "ReferenceFunction",
    "Ring", "WholeSpace", "boundary_distance", "killing_potential", "region_contains", "assemble_generator",
    "build_grid", "extrapolated_mean_exit_time", "ground_state", "heat_kernel", "iu_ratio", "SimScheme",
    "exit_probe", "levy_system_check", "mean_exit_time", "simulate_exits", "survival_probability",
    "ProblemSetup", "RateFunction", "beta_rate", "classify", "compactness_verdict", "ground_state_envelope",
    "iu_integral_test", "lower_bound_chain", "lower_bound_direct", "necessary_condition_check",
]
