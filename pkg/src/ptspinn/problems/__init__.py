"""Benchmark PDEs: definitions, residuals, sampling and reference solutions."""

from .definitions import (
    PROBLEMS,
    Fields,
    ProblemSpec,
    evaluate_fields,
    get_problem,
    lid_profile,
    network_field,
    residual,
)
from .reference import (
    MetricError,
    ReferenceSolution,
    UnsupportedReference,
    fd4_derivative,
    godunov_burgers,
    method_of_lines_fd4,
    reference_solve,
    relative_l2,
    spectral_if_rk4,
)
from .sampling import Batch, SampleCounts, sample, stream

__all__ = [
    "PROBLEMS",
    "Batch",
    "Fields",
    "MetricError",
    "ProblemSpec",
    "ReferenceSolution",
    "SampleCounts",
    "UnsupportedReference",
    "evaluate_fields",
    "fd4_derivative",
    "get_problem",
    "godunov_burgers",
    "lid_profile",
    "method_of_lines_fd4",
    "network_field",
    "reference_solve",
    "relative_l2",
    "residual",
    "sample",
    "spectral_if_rk4",
    "stream",
]
