"""Measure-valued Polya processes: simulation, QSD oracles, diagnostics."""

from ._accel import BACKEND
from .engine import MvppState, Observer, StepRecord, init, make_rng, normalized_views, run, sa_diagnostic, step
from .kernels import (
    ComposedKernel,
    LyapunovSpec,
    ReplacementKernel,
    WeightKernel,
    check_lyapunov,
    check_mass_bounds,
    compose,
    rescale,
)
from .measure import SignedDelta, WeightedMeasure
from .qsd import ReferenceDistribution, analytic_reference, nu_R, power_iteration_qsd, truncate_bd_kernel

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ComposedKernel",
    "LyapunovSpec",
    "MvppState",
    "Observer",
    "ReferenceDistribution",
    "ReplacementKernel",
    "SignedDelta",
    "StepRecord",
    "WeightKernel",
    "WeightedMeasure",
    "analytic_reference",
    "check_lyapunov",
    "check_mass_bounds",
    "compose",
    "init",
    "make_rng",
    "normalized_views",
    "nu_R",
    "power_iteration_qsd",
    "rescale",
    "run",
    "sa_diagnostic",
    "step",
    "truncate_bd_kernel",
    "__version__",
]
