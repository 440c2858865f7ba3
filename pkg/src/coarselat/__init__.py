"""Coarsening lattice dynamics and their back-in-time construction."""

from .analysis import (
    EstimateFit,
    RateFit,
    aronson_constant,
    fit_rate,
    holder_fit,
    kernel_estimates,
    living_mean,
    local_average,
    nash_fit,
    step_approximation_distance,
)
from .backward import (
    PositivityClass,
    comparison_violation,
    harnack_eta1,
    harnack_floor,
    integrate_backward,
    membership_PLd,
    positivity_fit,
)
from .construction import (
    ApproximantSolution,
    ConstructionSchedule,
    build_approximant,
    equilibrate,
    instability_datum,
    instability_run,
    vanishing_schedule,
)
from .core import (
    Configuration,
    DomainError,
    ModelParams,
    flux,
    gflux,
    living_neighbors,
    sigma_laplacian_field,
    sigma_laplacian_flux,
)
from .forward import integrate_forward, mild_residual
from .insertion import (
    JumpSequence,
    average_modifying_insertion,
    commutator_residual,
    max_local_deviation,
    push_forward,
)
from .integrator import Event, IntegratorPolicy, NumericalError, SingularityError, Trajectory
from .kernel import KernelProfile, heat_kernel, kernel_profile

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
