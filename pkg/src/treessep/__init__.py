"""Symmetric simple exclusion on regular trees: heat kernels, resolvent
potentials, moderate-deviation rates, simulation and duality oracles."""

from .treegeo import ORIGIN, Ball, VertexId, build_ball, distance, star
from .heatkernel import heat_bound, heat_kernel, radial_distribution
from .potential import gamma_matrix, green_integral, resolvent_field, sigma_sq
from .ratefn import ScalingSchedule, rate_function, tilt_for_target
from .ssep import Configuration, run, sample_initial, tilted_run
from .harness import EstimateReport, ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    "ORIGIN", "Ball", "VertexId", "build_ball", "distance", "star",
    "heat_bound", "heat_kernel", "radial_distribution",
    "gamma_matrix", "green_integral", "resolvent_field", "sigma_sq",
    "ScalingSchedule", "rate_function", "tilt_for_target",
    "Configuration", "run", "sample_initial", "tilted_run",
    "EstimateReport", "ExperimentConfig",
]
